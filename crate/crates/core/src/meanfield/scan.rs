use serde::{Deserialize, Serialize};

use crate::error::{Result, UrnError};
use crate::meanfield::two_dim::{equilibria_2d, raw_root_count};
use crate::meanfield::{check_p, Stability};
use crate::shape::ShapeFunction;

/// Inclusive grid `start, start + step, …, ≤ stop`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl AlphaGrid {
    /// Parses `a:b:step`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || UrnError::invalid("alpha", format!("expected start:stop:step, got `{s}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let v: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let g = AlphaGrid {
            start: v[0],
            stop: v[1],
            step: v[2],
        };
        g.values()?;
        Ok(g)
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.start > 0.0) || !(self.stop >= self.start) || !(self.step > 0.0) {
            return Err(UrnError::invalid(
                "alpha",
                "need 0 < start <= stop and step > 0",
            ));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        if n > 1_000_000 {
            return Err(UrnError::invalid("alpha", "grid has more than 10^6 points"));
        }
        // round away accumulated binary noise so 0.5 + 10 * 0.05 prints as 1
        Ok((0..=n)
            .map(|k| ((self.start + k as f64 * self.step) * 1e12).round() / 1e12)
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub alpha: f64,
    pub count: usize,
    pub roots: Vec<f64>,
    pub stabilities: Vec<Stability>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanTable {
    pub p1: f64,
    pub p2: f64,
    pub rows: Vec<ScanRow>,
    /// Exponent where the number of sign changes of `h¹` jumps from 1 to 3.
    pub tangency: Option<f64>,
}

impl ScanTable {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "alpha", "count", "root1", "stab1", "root2", "stab2", "root3", "stab3",
        ])?;
        for r in &self.rows {
            let mut rec = vec![r.alpha.to_string(), r.count.to_string()];
            for k in 0..3 {
                match (r.roots.get(k), r.stabilities.get(k)) {
                    (Some(y), Some(s)) => {
                        rec.push(y.to_string());
                        rec.push(s.as_str().to_string());
                    }
                    _ => {
                        rec.push(String::new());
                        rec.push(String::new());
                    }
                }
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| UrnError::io("<csv>", e))?;
        Ok(())
    }
}

fn raw_count(alpha: f64, p1: f64, p2: f64) -> Result<usize> {
    Ok(raw_root_count(&ShapeFunction::power(alpha)?, p1, p2))
}

/// Equilibria of `f = y^α` along an ascending `α` grid.
pub fn scan_alpha(p1: f64, p2: f64, alphas: &[f64]) -> Result<ScanTable> {
    check_p(p1, p2)?;
    if alphas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(UrnError::invalid(
            "alpha",
            "grid must be strictly ascending",
        ));
    }
    let mut rows = Vec::with_capacity(alphas.len());
    let mut raw = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let f = ShapeFunction::power(alpha)?;
        let report = equilibria_2d(&f, p1, p2)?;
        raw.push(raw_root_count(&f, p1, p2));
        rows.push(ScanRow {
            alpha,
            count: report.count(),
            roots: report.first_coordinates(),
            stabilities: report.points.iter().map(|p| p.stability).collect(),
        });
    }
    let mut tangency = None;
    if let Some(k) = (1..alphas.len()).find(|k| raw[*k - 1] == 1 && raw[*k] >= 2) {
        let (mut lo, mut hi) = (alphas[k - 1], alphas[k]);
        while hi - lo > 1e-9 {
            let mid = 0.5 * (lo + hi);
            if raw_count(mid, p1, p2)? >= 2 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        tangency = Some(0.5 * (lo + hi));
    }
    Ok(ScanTable {
        p1,
        p2,
        rows,
        tangency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g = AlphaGrid::parse("0.5:1:0.05").unwrap().values().unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[10], 1.0);
        assert!(AlphaGrid::parse("1:0:0.1").is_err());
        assert!(AlphaGrid::parse("a:b").is_err());
    }

    #[test]
    fn csv_has_empty_cells() {
        let t = scan_alpha(0.7, 0.75, &[1.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "alpha,count,root1,stab1,root2,stab2,root3,stab3");
        assert!(lines[1].starts_with("1,1,") && lines[1].ends_with(",,,,"));
        assert!(lines[2].starts_with("4,3,"));
    }
}
