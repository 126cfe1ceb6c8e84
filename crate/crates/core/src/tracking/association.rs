//! Greedy gated nearest-neighbor association.
//!
//! Measurements are taken in input order; each binds to the nearest track
//! that is still free and within the gate, ties going to the lowest track id.
//! Cost is O(|measurements|·|tracks|).

use super::{CartesianMeasurement, GateParams, Track};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Association {
    /// (track index, measurement index).
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_measurements: Vec<usize>,
}

pub fn associate(
    tracks: &[Track],
    measurements: &[CartesianMeasurement],
    gate: &GateParams,
) -> Association {
    let mut taken = vec![false; tracks.len()];
    let mut out = Association::default();
    for (mi, z) in measurements.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (ti, t) in tracks.iter().enumerate() {
            if taken[ti] {
                continue;
            }
            let d = (t.position() - z.position).norm();
            if d > gate.gate_radius_m {
                continue;
            }
            let better = match best {
                None => true,
                Some((bi, bd)) => d < bd || (d == bd && t.id < tracks[bi].id),
            };
            if better {
                best = Some((ti, d));
            }
        }
        match best {
            Some((ti, _)) => {
                taken[ti] = true;
                out.pairs.push((ti, mi));
            }
            None => out.unmatched_measurements.push(mi),
        }
    }
    out.unmatched_tracks = (0..tracks.len()).filter(|i| !taken[*i]).collect();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracking::TrackId;
    use crate::world::Vec3;
    use nalgebra::Matrix3;

    fn z(p: [f64; 3]) -> CartesianMeasurement {
        CartesianMeasurement::new(Vec3::from(p), Matrix3::identity(), 0.0)
    }

    fn track(id: u64, p: [f64; 3]) -> Track {
        Track::init(TrackId(id), &z(p), 1.0)
    }

    #[test]
    fn colocated_pair() {
        let a = associate(
            &[track(0, [1., 2., 3.])],
            &[z([1., 2., 3.])],
            &GateParams::default(),
        );
        assert_eq!(a.pairs, vec![(0, 0)]);
        assert!(a.unmatched_tracks.is_empty() && a.unmatched_measurements.is_empty());
    }

    #[test]
    fn outside_gate() {
        let a = associate(
            &[track(0, [0., 0., 0.])],
            &[z([50., 0., 0.])],
            &GateParams::default(),
        );
        assert_eq!(a.unmatched_measurements, vec![0]);
        assert_eq!(a.unmatched_tracks, vec![0]);
    }

    #[test]
    fn order_independent_when_unambiguous() {
        let tracks = [track(0, [0., 0., 0.]), track(1, [100., 0., 0.])];
        let ms = [z([0.5, 0.5, 0.]), z([99.5, 0., 0.5])];
        let fwd = associate(&tracks, &ms, &GateParams::default());
        let rev = associate(
            &tracks,
            &[ms[1].clone(), ms[0].clone()],
            &GateParams::default(),
        );
        assert_eq!(fwd.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(rev.pairs, vec![(1, 0), (0, 1)]);
    }

    #[test]
    fn tie_goes_to_lowest_track_id() {
        let tracks = [track(7, [1., 0., 0.]), track(3, [-1., 0., 0.])];
        let a = associate(&tracks, &[z([0., 0., 0.])], &GateParams::default());
        assert_eq!(a.pairs, vec![(1, 0)]);
    }
}
