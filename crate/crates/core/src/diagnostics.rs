//! Per-snapshot observables and their CSV form.

use std::io::{self, Write};

use crate::field::{margins, SpectralField};
use crate::norms::{
    angular_momentum, difference_norms, level_energy, s_norm, s_plus_norm, sigma0_norm, weighted_value, z_norm, NormConfig, WeightSample,
};

/// CSV header; part of the public file format.
pub const CSV_COLUMNS: [&str; 10] = ["t", "l2", "sigma0_s", "z", "s_norm", "s_plus", "mass", "level_energy", "ang_momentum", "xT_diag"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub l2: f64,
    pub sigma0_s: f64,
    pub z: f64,
    pub s_norm: f64,
    pub s_plus: f64,
    pub mass: f64,
    pub level_energy: f64,
    pub ang_momentum: f64,
    /// Running sup of the `X_T`-style weighted quantity.
    pub xt_diag: f64,
    /// Central-difference surrogate for `‖∂_t F‖_S`.
    pub dt_s: f64,
    /// Band and box margins were within tolerance, so `zF` terms are trustworthy.
    pub margins_ok: bool,
}

impl DiagnosticsRow {
    pub fn values(&self) -> [f64; 10] {
        [self.t, self.l2, self.sigma0_s, self.z, self.s_norm, self.s_plus, self.mass, self.level_energy, self.ang_momentum, self.xt_diag]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticsSeries {
    pub rows: Vec<DiagnosticsRow>,
    /// Ordered `key = value` metadata (config hash, code version, ...).
    pub meta: Vec<(String, String)>,
}

/// Fixed 17-significant-digit rendering used in every CSV.
pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

impl DiagnosticsSeries {
    pub fn from_snapshots(times: &[f64], fields: &[SpectralField], cfg: &NormConfig) -> Self {
        let dt_s = difference_norms(times, fields, |f| s_norm(f, cfg));
        let mut running: f64 = 0.0;
        let rows = times
            .iter()
            .zip(fields)
            .zip(dt_s)
            .map(|((&t, f), dt_s)| {
                let z = z_norm(f);
                let s = s_norm(f, cfg);
                running = running.max(weighted_value(&WeightSample { t, z, s, dt_s }, cfg.delta));
                DiagnosticsRow {
                    t,
                    l2: f.norm(),
                    sigma0_s: sigma0_norm(f, cfg.s_sigma),
                    z,
                    s_norm: s,
                    s_plus: s_plus_norm(f, cfg),
                    mass: f.norm_sqr(),
                    level_energy: level_energy(f),
                    ang_momentum: angular_momentum(f),
                    xt_diag: running,
                    dt_s,
                    margins_ok: margins(f).ok(),
                }
            })
            .collect();
        DiagnosticsSeries { rows, meta: Vec::new() }
    }

    pub fn weight_samples(&self) -> Vec<WeightSample> {
        self.rows.iter().map(|r| WeightSample { t: r.t, z: r.z, s: r.s_norm, dt_s: r.dt_s }).collect()
    }

    /// Rows whose `zF`-dependent columns are flagged as low quality.
    pub fn flagged_rows(&self) -> usize {
        self.rows.iter().filter(|r| !r.margins_ok).count()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", CSV_COLUMNS.join(","))?;
        for row in &self.rows {
            let line: Vec<String> = row.values().iter().map(|&v| format_value(v)).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn write_meta<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (k, v) in &self.meta {
            writeln!(w, "{k} = {v}")?;
        }
        writeln!(w, "flagged_rows = {}", self.flagged_rows())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Space;

    #[test]
    fn zero_field_gives_zero_rows() {
        let sp = Space::new(1, 4, 16, 20.0).unwrap();
        let fields = vec![SpectralField::zeros(&sp); 3];
        let s = DiagnosticsSeries::from_snapshots(&[0.0, 1.0, 2.0], &fields, &NormConfig::default());
        for row in &s.rows {
            assert!(row.values()[1..].iter().all(|&v| v == 0.0));
            assert!(row.margins_ok);
        }
    }

    #[test]
    fn csv_layout() {
        let sp = Space::new(1, 4, 16, 20.0).unwrap();
        let f = SpectralField::random(&sp, 1);
        let s = DiagnosticsSeries::from_snapshots(&[0.0], &[f], &NormConfig::default());
        let text = s.to_csv_string();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,l2,sigma0_s,z,s_norm,s_plus,mass,level_energy,ang_momentum,xT_diag");
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(fields.len(), 10);
        assert_eq!(fields[0], "0.0000000000000000e0");
        assert!((fields[1].parse::<f64>().unwrap() - 1.0).abs() < 1e-15);
        assert!(lines.next().is_none());
    }
}
