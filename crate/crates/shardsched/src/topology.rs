//! Inter-shard distance model.
//!
//! Distances are measured in rounds: a message between shards at distance
//! `d` is in flight for `d` rounds. The uniform model puts every pair at
//! distance 1; the line model places shards on a path with unit spacing.

use crate::model::ShardId;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    Uniform,
    Line,
    Explicit,
}

#[derive(Debug, Clone)]
pub struct Topology {
    shards: u32,
    kind: TopologyKind,
    /// Row-major `s x s` distance matrix.
    dist: Vec<u32>,
    diameter: u32,
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("shard count must be at least 1")]
    NoShards,
    #[error("topology file is malformed: {0}")]
    Malformed(String),
    #[error("distance matrix violates {0}")]
    Invalid(String),
}

impl Topology {
    pub fn uniform(shards: u32) -> Result<Topology, TopologyError> {
        if shards == 0 {
            return Err(TopologyError::NoShards);
        }
        let mut t = Topology {
            shards,
            kind: TopologyKind::Uniform,
            dist: vec![1; (shards * shards) as usize],
            diameter: if shards > 1 { 1 } else { 0 },
        };
        for i in 0..shards {
            t.dist[(i * shards + i) as usize] = 0;
        }
        Ok(t)
    }

    pub fn line(shards: u32) -> Result<Topology, TopologyError> {
        if shards == 0 {
            return Err(TopologyError::NoShards);
        }
        let mut dist = vec![0; (shards * shards) as usize];
        for i in 0..shards {
            for j in 0..shards {
                dist[(i * shards + j) as usize] = i.abs_diff(j);
            }
        }
        Ok(Topology {
            shards,
            kind: TopologyKind::Line,
            dist,
            diameter: shards - 1,
        })
    }

    /// Builds from an explicit lower-triangular matrix (`dist[i][j]` for
    /// j < i, row per shard starting at the second).
    pub fn from_lower_triangular(shards: u32, rows: &[Vec<u32>]) -> Result<Topology, TopologyError> {
        if shards == 0 {
            return Err(TopologyError::NoShards);
        }
        if rows.len() as u32 != shards.saturating_sub(1) {
            return Err(TopologyError::Malformed(format!(
                "expected {} matrix rows, found {}",
                shards - 1,
                rows.len()
            )));
        }
        let mut dist = vec![0u32; (shards * shards) as usize];
        for (i, row) in rows.iter().enumerate() {
            let i = i + 1;
            if row.len() != i {
                return Err(TopologyError::Malformed(format!(
                    "row {} must hold {} entries, found {}",
                    i + 1,
                    i,
                    row.len()
                )));
            }
            for (j, &d) in row.iter().enumerate() {
                if d == 0 {
                    return Err(TopologyError::Invalid("positivity of off-diagonal distances".into()));
                }
                dist[i * shards as usize + j] = d;
                dist[j * shards as usize + i] = d;
            }
        }
        let diameter = dist.iter().copied().max().unwrap_or(0);
        let t = Topology {
            shards,
            kind: TopologyKind::Explicit,
            dist,
            diameter,
        };
        t.check_triangle()?;
        Ok(t)
    }

    /// Text format: first line the shard count, second line `uniform`,
    /// `line`, or the start of a lower-triangular distance matrix.
    pub fn from_text(text: &str) -> Result<Topology, TopologyError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let s: u32 = lines
            .next()
            .ok_or_else(|| TopologyError::Malformed("missing shard count".into()))?
            .parse()
            .map_err(|_| TopologyError::Malformed("shard count must be an integer".into()))?;
        let rest: Vec<&str> = lines.collect();
        match rest.first().copied() {
            Some("uniform") => Topology::uniform(s),
            Some("line") => Topology::line(s),
            Some(_) => {
                let rows: Result<Vec<Vec<u32>>, _> = rest
                    .iter()
                    .map(|l| {
                        l.split_whitespace()
                            .map(|w| {
                                w.parse::<u32>().map_err(|_| {
                                    TopologyError::Malformed(format!("bad distance `{w}`"))
                                })
                            })
                            .collect()
                    })
                    .collect();
                Topology::from_lower_triangular(s, &rows?)
            }
            None if s == 1 => Topology::uniform(1),
            None => Err(TopologyError::Malformed("missing topology kind or matrix".into())),
        }
    }

    fn check_triangle(&self) -> Result<(), TopologyError> {
        let s = self.shards as usize;
        for i in 0..s {
            for j in 0..s {
                for k in 0..s {
                    if self.dist[i * s + j] > self.dist[i * s + k] + self.dist[k * s + j] {
                        return Err(TopologyError::Invalid("the triangle inequality".into()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn shards(&self) -> u32 {
        self.shards
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn is_uniform(&self) -> bool {
        self.shards == 1 || self.diameter <= 1
    }

    pub fn diameter(&self) -> u32 {
        self.diameter
    }

    pub fn distance(&self, a: ShardId, b: ShardId) -> u32 {
        debug_assert!(a.0 >= 1 && a.0 <= self.shards && b.0 >= 1 && b.0 <= self.shards);
        self.dist[((a.0 - 1) * self.shards + (b.0 - 1)) as usize]
    }

    pub fn shard_ids(&self) -> impl Iterator<Item = ShardId> {
        (1..=self.shards).map(ShardId)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_distances() {
        let t = Topology::line(64).unwrap();
        assert_eq!(t.distance(ShardId(1), ShardId(2)), 1);
        assert_eq!(t.distance(ShardId(1), ShardId(3)), 2);
        assert_eq!(t.distance(ShardId(1), ShardId(4)), 3);
        assert_eq!(t.diameter(), 63);
    }

    #[test]
    fn line_matrix_matches_direct_recomputation() {
        let t = Topology::line(8).unwrap();
        for i in 1..=8u32 {
            for j in 1..=8u32 {
                assert_eq!(t.distance(ShardId(i), ShardId(j)), i.abs_diff(j));
            }
        }
    }

    #[test]
    fn single_shard_is_degenerate() {
        let t = Topology::line(1).unwrap();
        assert_eq!(t.diameter(), 0);
        assert_eq!(t.distance(ShardId(1), ShardId(1)), 0);
    }

    #[test]
    fn uniform_distances() {
        let t = Topology::uniform(5).unwrap();
        assert_eq!(t.diameter(), 1);
        assert!(t.is_uniform());
        for i in 1..=5u32 {
            for j in 1..=5u32 {
                let expect = if i == j { 0 } else { 1 };
                assert_eq!(t.distance(ShardId(i), ShardId(j)), expect);
            }
        }
    }

    #[test]
    fn text_round_trip() {
        let t = Topology::from_text("8\nline\n").unwrap();
        assert_eq!(t.kind(), TopologyKind::Line);
        assert_eq!(t.shards(), 8);

        let t = Topology::from_text("3\nuniform").unwrap();
        assert_eq!(t.diameter(), 1);

        // Explicit 3-shard matrix: d(2,1)=2; d(3,1)=2, d(3,2)=1.
        let t = Topology::from_text("3\n2\n2 1\n").unwrap();
        assert_eq!(t.distance(ShardId(2), ShardId(1)), 2);
        assert_eq!(t.distance(ShardId(3), ShardId(2)), 1);
        assert_eq!(t.diameter(), 2);

        assert!(Topology::from_text("3\n0\n1 1\n").is_err());
        assert!(Topology::from_text("").is_err());
    }

    #[test]
    fn triangle_violation_rejected() {
        // d(2,1)=5, d(3,1)=1, d(3,2)=1 violates 5 <= 1+1.
        assert!(Topology::from_text("3\n5\n1 1\n").is_err());
    }
}
