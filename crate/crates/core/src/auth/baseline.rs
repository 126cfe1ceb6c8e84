//! Mobility-correlation Sybil detector, AD only.
//!
//! Identities operated by one transmitter tend to move together. Two
//! identities are linked when the correlation of their claimed displacement
//! series exceeds ρ and the variance of the distance between them stays
//! below a bound. Linked groups larger than one are flagged.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channels::Did;
use crate::error::{Error, Result};
use crate::world::Vec3;

use super::{Verdict, VerdictClass};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Claims per identity, most recent last.
    pub window: usize,
    pub rho: f64,
    /// m².
    pub distance_variance_bound: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            window: 10,
            rho: 0.9,
            distance_variance_bound: 25.0,
        }
    }
}

/// Pearson correlation; constant series correlate 1 with an equal series
/// and 0 otherwise.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let (a, b) = (&a[..n], &b[..n]);
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 1e-18 || sbb <= 1e-18 {
        let equal = a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9);
        return if equal { 1.0 } else { 0.0 };
    }
    sab / (saa.sqrt() * sbb.sqrt())
}

/// Flattened per-step displacements of a position series.
pub fn displacements(series: &[Vec3]) -> Vec<f64> {
    series
        .windows(2)
        .flat_map(|w| {
            let d = w[1] - w[0];
            [d.x, d.y, d.z]
        })
        .collect()
}

fn distance_variance(a: &[Vec3], b: &[Vec3]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).norm()).collect();
    let m = d.iter().sum::<f64>() / d.len() as f64;
    d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / d.len() as f64
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut c = i;
    while parent[c] != r {
        let next = parent[c];
        parent[c] = r;
        c = next;
    }
    r
}

/// Verdicts for every identity with a full window; others are skipped.
/// Flagged groups get one Malicious member (the one with the highest total
/// correlation to the rest, ties to the lower identity) and Sybil for the
/// rest; all other identities are Trusted.
pub fn baseline_mobility_detect(
    history: &BTreeMap<Did, Vec<Vec3>>,
    cfg: &BaselineConfig,
) -> Result<Vec<Verdict>> {
    if cfg.window < 3 {
        return Err(Error::InsufficientHistory {
            needed: 3,
            got: cfg.window,
        });
    }
    let series: Vec<(Did, &[Vec3])> = history
        .iter()
        .filter(|(_, s)| s.len() >= cfg.window)
        .map(|(d, s)| (*d, &s[s.len() - cfg.window..]))
        .collect();
    if series.is_empty() {
        let got = history.values().map(Vec::len).max().unwrap_or(0);
        return Err(Error::InsufficientHistory {
            needed: cfg.window,
            got,
        });
    }
    let disp: Vec<Vec<f64>> = series.iter().map(|(_, s)| displacements(s)).collect();
    let n = series.len();
    let mut corr = vec![0.0; n * n];
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            let c = pearson(&disp[i], &disp[j]);
            corr[i * n + j] = c;
            corr[j * n + i] = c;
            if c > cfg.rho
                && distance_variance(series[i].1, series[j].1) < cfg.distance_variance_bound
            {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut class = vec![VerdictClass::Trusted; n];
    for members in groups.values().filter(|m| m.len() > 1) {
        let score = |i: usize| {
            members
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| corr[i * n + j])
                .sum::<f64>()
        };
        let lead =
            members.iter().copied().fold(
                members[0],
                |best, i| if score(i) > score(best) { i } else { best },
            );
        for &i in members {
            class[i] = if i == lead {
                VerdictClass::Malicious
            } else {
                VerdictClass::Sybil
            };
        }
    }
    Ok(series
        .iter()
        .zip(class)
        .map(|((did, _), class)| Verdict { did: *did, class })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(start: Vec3, step: Vec3, n: usize) -> Vec<Vec3> {
        (0..n).map(|k| start + step * k as f64).collect()
    }

    #[test]
    fn fixed_offset_phantoms_are_grouped() {
        let host = [
            Vec3::new(0., 0., 100.),
            Vec3::new(1., 0.2, 100.),
            Vec3::new(2.5, 0.1, 100.),
            Vec3::new(3.2, 0.5, 100.),
        ];
        let mut h = BTreeMap::new();
        for (k, off) in [
            Vec3::new(30., 0., 0.),
            Vec3::new(0., 30., 0.),
            Vec3::new(-30., 0., 0.),
        ]
        .iter()
        .enumerate()
        {
            h.insert(Did(k as u64 + 1), host.iter().map(|p| p + off).collect());
        }
        h.insert(
            Did(9),
            line(Vec3::new(500., 0., 0.), Vec3::new(0., -2., 0.3), 4),
        );
        let cfg = BaselineConfig {
            window: 4,
            ..BaselineConfig::default()
        };
        let v = baseline_mobility_detect(&h, &cfg).unwrap();
        let flagged: Vec<Did> = v
            .iter()
            .filter(|v| v.class.is_flagged())
            .map(|v| v.did)
            .collect();
        assert_eq!(flagged, vec![Did(1), Did(2), Did(3)]);
        assert_eq!(
            v.iter()
                .filter(|v| v.class == VerdictClass::Malicious)
                .count(),
            1
        );
    }

    #[test]
    fn zero_variance_series() {
        assert_eq!(pearson(&[0.0; 6], &[0.0; 6]), 1.0);
        assert_eq!(pearson(&[0.0; 6], &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]), 0.0);
        assert_close!(pearson(&[1., 2., 3.], &[2., 4., 6.]), 1.0, 1e-12);
        assert_close!(pearson(&[1., 2., 3.], &[3., 2., 1.]), -1.0, 1e-12);
    }

    #[test]
    fn window_too_short() {
        let h = BTreeMap::new();
        assert!(matches!(
            baseline_mobility_detect(
                &h,
                &BaselineConfig {
                    window: 2,
                    ..Default::default()
                }
            ),
            Err(Error::InsufficientHistory { needed: 3, got: 2 })
        ));
        let mut h = BTreeMap::new();
        h.insert(Did(1), vec![Vec3::zeros(); 2]);
        assert!(matches!(
            baseline_mobility_detect(&h, &BaselineConfig::default()),
            Err(Error::InsufficientHistory { .. })
        ));
    }
}
