//! Sparse observation sets and their text format.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::channel::Trajectory;
use crate::error::{Error, Result};

/// Observable index: wetted area.
pub const AREA: u8 = 1;
/// Observable index: velocity.
pub const VELOCITY: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Time index, `t_i = i Δt`, `i ≥ 1`.
    pub i: usize,
    /// Grid index.
    pub j: usize,
    /// 1 = area, 2 = velocity.
    pub k: u8,
    pub value: f64,
}

impl Observation {
    fn key(&self) -> (usize, usize, u8) {
        (self.i, self.j, self.k)
    }
}

/// Observations sorted lexicographically by `(i, j, k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub n_x: usize,
    pub n_t: usize,
    pub dt: f64,
    pub dx: f64,
    pub seed: u64,
    entries: Vec<Observation>,
    sum_sq: f64,
}

impl ObservationSet {
    /// Sorts the entries and rejects duplicates, out-of-range indices and
    /// non-finite values.
    pub fn new(n_x: usize, n_t: usize, dt: f64, dx: f64, seed: u64, mut entries: Vec<Observation>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyObservations);
        }
        entries.sort_by_key(Observation::key);
        for w in entries.windows(2) {
            if w[0].key() == w[1].key() {
                return Err(Error::Domain(format!("duplicate observation {:?}", w[0].key())));
            }
        }
        for e in &entries {
            if e.i == 0 || e.i > n_t || e.j > n_x || !(e.k == AREA || e.k == VELOCITY) || !e.value.is_finite() {
                return Err(Error::Domain(format!("invalid observation {e:?}")));
            }
        }
        let sum_sq = entries.iter().map(|e| e.value * e.value).sum();
        Ok(Self {
            n_x,
            n_t,
            dt,
            dx,
            seed,
            entries,
            sum_sq,
        })
    }

    pub fn entries(&self) -> &[Observation] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `Σ value²`.
    pub fn sum_sq(&self) -> f64 {
        self.sum_sq
    }

    /// Size of the full index set, `2 n_t (n_x + 1)`.
    pub fn full_size(&self) -> usize {
        2 * self.n_t * (self.n_x + 1)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut s = String::new();
        writeln!(s, "# n_x n_t dt dx seed").unwrap();
        writeln!(s, "{} {} {:e} {:e} {}", self.n_x, self.n_t, self.dt, self.dx, self.seed).unwrap();
        for e in &self.entries {
            writeln!(s, "{} {} {} {:.16e}", e.i, e.j, e.k, e.value).unwrap();
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut header: Option<(usize, usize, f64, f64, u64)> = None;
        let mut entries = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = t.split_whitespace().collect();
            let err = |msg: &str| Error::Parse {
                line: lineno,
                msg: msg.to_string(),
            };
            let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| err(&format!("bad {what} '{s}'")));
            let int = |s: &str, what: &str| s.parse::<usize>().map_err(|_| err(&format!("bad {what} '{s}'")));
            if header.is_none() {
                if f.len() != 5 {
                    return Err(err("header needs n_x n_t dt dx seed"));
                }
                let seed = f[4].parse::<u64>().map_err(|_| err("bad seed"))?;
                header = Some((int(f[0], "n_x")?, int(f[1], "n_t")?, num(f[2], "dt")?, num(f[3], "dx")?, seed));
                continue;
            }
            if f.len() != 4 {
                return Err(err("entry needs i j k value"));
            }
            let k = f[2].parse::<u8>().map_err(|_| err("bad k"))?;
            entries.push(Observation {
                i: int(f[0], "i")?,
                j: int(f[1], "j")?,
                k,
                value: num(f[3], "value")?,
            });
        }
        let (n_x, n_t, dt, dx, seed) = header.ok_or(Error::Parse {
            line: 0,
            msg: "missing header".into(),
        })?;
        Self::new(n_x, n_t, dt, dx, seed, entries)
    }
}

/// Keeps each `(i, j, k)` of the trajectory with probability `fraction`,
/// drawing one uniform per triple in lexicographic order.
pub fn sample_observations<G: Rng + ?Sized>(
    traj: &Trajectory,
    dx: f64,
    fraction: f64,
    seed: u64,
    rng: &mut G,
) -> Result<ObservationSet> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!("fraction {fraction} not in (0, 1]")));
    }
    let n_t = traj.steps();
    let n_points = traj.area.first().map_or(0, Vec::len);
    let mut entries = Vec::new();
    for i in 1..=n_t {
        for j in 0..n_points {
            for k in [AREA, VELOCITY] {
                let keep = fraction >= 1.0 || rng.random::<f64>() < fraction;
                if keep {
                    entries.push(Observation {
                        i,
                        j,
                        k,
                        value: traj.value(i, j, k),
                    });
                }
            }
        }
    }
    ObservationSet::new(n_points.saturating_sub(1), n_t, traj.dt, dx, seed, entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, RngStreams};
    use crate::sven::channel::{simulate, ChannelSpec};

    fn traj(n_x: usize, n_t: usize) -> Trajectory {
        simulate(&vec![0.0366; n_x + 1], &ChannelSpec::with_nx(n_x), n_t).unwrap()
    }

    #[test]
    fn full_fraction_keeps_everything() {
        let t = traj(20, 5);
        let mut rng = RngStreams::new(0).stream(Purpose::ObsMask);
        let obs = sample_observations(&t, 6.0, 1.0, 0, &mut rng).unwrap();
        assert_eq!(obs.len(), 2 * 5 * 21);
        assert_eq!(obs.len(), obs.full_size());
        let e = obs.entries();
        assert_eq!((e[0].i, e[0].j, e[0].k), (1, 0, 1));
        assert_eq!((e[1].i, e[1].j, e[1].k), (1, 0, 2));
        assert_eq!(e[1].value, t.value(1, 0, 2));
    }

    #[test]
    fn fraction_concentrates() {
        let t = traj(50, 10);
        let mut total = 0.0;
        let reps = 20;
        for s in 0..reps {
            let mut rng = RngStreams::new(s).stream(Purpose::ObsMask);
            let obs = sample_observations(&t, 6.0, 0.5, s, &mut rng).unwrap();
            total += obs.len() as f64 / obs.full_size() as f64;
        }
        assert!((total / reps as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn paper_sized_mask() {
        let t = traj(500, 10);
        let mut rng = RngStreams::new(1).stream(Purpose::ObsMask);
        let obs = sample_observations(&t, 6.0, 0.1, 1, &mut rng).unwrap();
        // expectation 1002, standard deviation ≈ 30
        assert!((obs.len() as f64 - 1002.0).abs() < 150.0, "{}", obs.len());
    }

    #[test]
    fn sum_sq_is_cached_sum() {
        let t = traj(10, 3);
        let mut rng = RngStreams::new(3).stream(Purpose::ObsMask);
        let obs = sample_observations(&t, 6.0, 0.7, 3, &mut rng).unwrap();
        let direct: f64 = obs.entries().iter().map(|e| e.value * e.value).sum();
        assert!((obs.sum_sq() - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn text_round_trip() {
        let t = traj(10, 3);
        let mut rng = RngStreams::new(9).stream(Purpose::ObsMask);
        let obs = sample_observations(&t, 6.0, 0.4, 9, &mut rng).unwrap();
        let mut buf = Vec::new();
        obs.write_to(&mut buf).unwrap();
        let back = ObservationSet::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, obs);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            ObservationSet::read_from("1 2 3\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            ObservationSet::read_from("10 3 0.1 6 0\n1 2 x 4\n".as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            ObservationSet::read_from("10 3 0.1 6 0\n".as_bytes()),
            Err(Error::EmptyObservations)
        ));
        assert!(ObservationSet::read_from("10 3 0.1 6 0\n1 2 1 4\n1 2 1 5\n".as_bytes()).is_err());
        assert!(ObservationSet::read_from("10 3 0.1 6 0\n4 2 1 4\n".as_bytes()).is_err());
    }

    #[test]
    fn bad_fraction() {
        let t = traj(10, 3);
        let mut rng = RngStreams::new(0).stream(Purpose::ObsMask);
        assert!(sample_observations(&t, 6.0, 0.0, 0, &mut rng).is_err());
        assert!(sample_observations(&t, 6.0, 1.5, 0, &mut rng).is_err());
    }
}
