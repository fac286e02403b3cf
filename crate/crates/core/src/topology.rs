//! Mote placement for the distributed MLP.
//!
//! Output-layer motes sit uniformly in a square of side `sqrt(n_output)`
//! centred inside the field of side `sqrt(n_hidden + n_output)`; hidden-layer
//! motes are uniform over the rest of the field. Coordinates are in node-count
//! units, so the rounded Euclidean distance between two motes stands in for
//! the hop count between them.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("layer sizes must be positive (hidden={n_hidden}, output={n_output})")]
    EmptyLayer { n_hidden: usize, n_output: usize },
    #[error("invalid layout: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Hidden,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned square given by its lower-left corner and side length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Square {
    pub x0: f64,
    pub y0: f64,
    pub side: f64,
}

impl Square {
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x0 && p.x <= self.x0 + self.side && p.y >= self.y0 && p.y <= self.y0 + self.side
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        Point {
            x: self.x0 + self.side * rng.random::<f64>(),
            y: self.y0 + self.side * rng.random::<f64>(),
        }
    }
}

/// Placement of one neuron per mote plus the derived hop counts.
///
/// Motes `0..n_hidden` are hidden-layer neurons, followed by the
/// `n_output` output-layer neurons. `hop_matrix` covers every pair of motes
/// (zero on the diagonal, at least one elsewhere).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoteLayout {
    pub n_hidden: usize,
    pub n_output: usize,
    pub positions: Vec<Point>,
    pub roles: Vec<Role>,
    pub outer_side: f64,
    pub inner: Square,
    pub hop_matrix: Vec<Vec<u32>>,
    pub l_max: u32,
}

/// `max(1, round-half-up(ed))`.
pub fn hop_count(ed: f64) -> u32 {
    ((ed + 0.5).floor() as u32).max(1)
}

/// Centred inner square for `n_output` motes inside a field of side `outer_side`.
fn centered_inner(outer_side: f64, n_output: usize) -> Square {
    let side = (n_output as f64).sqrt();
    let offset = (outer_side - side) / 2.0;
    Square { x0: offset, y0: offset, side }
}

/// Places motes at random in the nested-square field.
pub fn place_motes<R: Rng + ?Sized>(rng: &mut R, n_hidden: usize, n_output: usize) -> Result<MoteLayout, TopologyError> {
    if n_hidden == 0 || n_output == 0 {
        return Err(TopologyError::EmptyLayer { n_hidden, n_output });
    }
    let outer_side = ((n_hidden + n_output) as f64).sqrt();
    let inner = centered_inner(outer_side, n_output);
    place_in_regions(rng, n_hidden, n_output, outer_side, inner)
}

/// Placement with an arbitrary inner square, used to compare against
/// non-centred arrangements.
pub fn place_in_regions<R: Rng + ?Sized>(
    rng: &mut R,
    n_hidden: usize,
    n_output: usize,
    outer_side: f64,
    inner: Square,
) -> Result<MoteLayout, TopologyError> {
    let outer = Square { x0: 0.0, y0: 0.0, side: outer_side };
    let mut positions = Vec::with_capacity(n_hidden + n_output);
    let mut roles = Vec::with_capacity(n_hidden + n_output);
    for _ in 0..n_hidden {
        let p = loop {
            let p = outer.sample(rng);
            if !inner.contains(p) {
                break p;
            }
        };
        positions.push(p);
        roles.push(Role::Hidden);
    }
    for _ in 0..n_output {
        positions.push(inner.sample(rng));
        roles.push(Role::Output);
    }
    MoteLayout::from_positions(n_hidden, n_output, positions, roles, outer_side, inner)
}

impl MoteLayout {
    pub fn from_positions(
        n_hidden: usize,
        n_output: usize,
        positions: Vec<Point>,
        roles: Vec<Role>,
        outer_side: f64,
        inner: Square,
    ) -> Result<Self, TopologyError> {
        let n = n_hidden + n_output;
        if positions.len() != n || roles.len() != n {
            return Err(TopologyError::Invalid(format!(
                "expected {n} motes, got {} positions and {} roles",
                positions.len(),
                roles.len()
            )));
        }
        let mut hop_matrix = vec![vec![0u32; n]; n];
        let mut l_max = 1;
        for i in 0..n {
            for j in (i + 1)..n {
                let h = hop_count(positions[i].distance(positions[j]));
                hop_matrix[i][j] = h;
                hop_matrix[j][i] = h;
                l_max = l_max.max(h);
            }
        }
        Ok(Self { n_hidden, n_output, positions, roles, outer_side, inner, hop_matrix, l_max })
    }

    pub fn inner_side(&self) -> f64 {
        self.inner.side
    }

    /// Mote index of output neuron `j`.
    pub fn output_mote(&self, j: usize) -> usize {
        self.n_hidden + j
    }

    /// Hops between hidden neuron `i` and output neuron `j`.
    pub fn hidden_output_hops(&self, i: usize, j: usize) -> u32 {
        self.hop_matrix[i][self.output_mote(j)]
    }

    /// Total hop transmissions to move every hidden output to every output neuron once.
    pub fn forward_message_hops(&self) -> u64 {
        (0..self.n_hidden)
            .flat_map(|i| (0..self.n_output).map(move |j| (i, j)))
            .map(|(i, j)| u64::from(self.hidden_output_hops(i, j)))
            .sum()
    }

    pub fn max_hop_count(&self) -> u32 {
        self.l_max
    }

    pub fn mean_hidden_output_distance(&self) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n_hidden {
            for j in 0..self.n_output {
                total += self.positions[i].distance(self.positions[self.output_mote(j)]);
            }
        }
        total / (self.n_hidden * self.n_output) as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Stream, StreamSeeds};
    use approx::assert_abs_diff_eq;

    fn rng(seed: u64) -> crate::rng::SimRng {
        StreamSeeds::new(seed).rng(Stream::Placement)
    }

    #[test]
    fn side_lengths() {
        let l = place_motes(&mut rng(1), 5, 3).unwrap();
        assert_abs_diff_eq!(l.outer_side, 8f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(l.inner_side(), 3f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(l.outer_side, 2.828, epsilon = 1e-3);
        assert_abs_diff_eq!(l.inner_side(), 1.732, epsilon = 1e-3);
    }

    #[test]
    fn smallest_layout() {
        let l = place_motes(&mut rng(2), 1, 1).unwrap();
        assert_abs_diff_eq!(l.outer_side, 2f64.sqrt(), epsilon = 1e-12);
        assert_eq!(l.inner_side(), 1.0);
        assert!(!l.inner.contains(l.positions[0]));
        assert!(l.inner.contains(l.positions[1]));
        assert_eq!(l.hop_matrix[0][1], l.hop_matrix[1][0]);
        assert!(l.hop_matrix[0][1] >= 1);
    }

    #[test]
    fn empty_layers_rejected() {
        assert!(place_motes(&mut rng(1), 0, 3).is_err());
        assert!(place_motes(&mut rng(1), 3, 0).is_err());
    }

    #[test]
    fn placement_is_deterministic() {
        assert_eq!(place_motes(&mut rng(8), 12, 2).unwrap(), place_motes(&mut rng(8), 12, 2).unwrap());
    }

    #[test]
    fn hop_count_rounding() {
        assert_eq!(hop_count(0.0), 1);
        assert_eq!(hop_count(0.2), 1);
        assert_eq!(hop_count(3.4), 3);
        assert_eq!(hop_count(3.5), 4);
    }

    #[test]
    fn max_hop_examples() {
        let sq = Square { x0: 0.0, y0: 0.0, side: 10.0 };
        let pts = vec![Point { x: 0.0, y: 0.0 }, Point { x: 1.0, y: 0.0 }];
        let l = MoteLayout::from_positions(1, 1, pts, vec![Role::Hidden, Role::Output], 10.0, sq).unwrap();
        assert_eq!(l.max_hop_count(), 1);

        // distances 1, 2, 5, 3 from the first mote
        let pts = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 4.0), (0.0, 3.0)]
            .iter()
            .map(|&(x, y)| Point { x, y })
            .collect();
        let roles = vec![Role::Hidden, Role::Hidden, Role::Hidden, Role::Hidden, Role::Output];
        let l = MoteLayout::from_positions(4, 1, pts, roles, 10.0, sq).unwrap();
        assert_eq!(l.max_hop_count(), 5);
    }

    #[test]
    fn regions_symmetry_and_diagonal_bound() {
        for seed in 0..1000 {
            let mut r = rng(seed);
            let n_hidden = 1 + (seed as usize % 40);
            let n_output = 1 + (seed as usize % 7);
            let l = place_motes(&mut r, n_hidden, n_output).unwrap();
            for (p, role) in l.positions.iter().zip(&l.roles) {
                match role {
                    Role::Hidden => assert!(!l.inner.contains(*p)),
                    Role::Output => assert!(l.inner.contains(*p)),
                }
                assert!(p.x >= 0.0 && p.x <= l.outer_side && p.y >= 0.0 && p.y <= l.outer_side);
            }
            let n = n_hidden + n_output;
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(l.hop_matrix[i][j], l.hop_matrix[j][i]);
                    if i != j {
                        assert!(l.hop_matrix[i][j] >= 1);
                    }
                }
            }
            let bound = (2f64.sqrt() * l.outer_side).ceil() as u32;
            assert!(l.l_max <= bound);
        }
    }

    #[test]
    fn centred_outputs_shorten_mean_distance() {
        let (n_hidden, n_output) = (40, 4);
        let outer_side = ((n_hidden + n_output) as f64).sqrt();
        let corner = Square { x0: 0.0, y0: 0.0, side: (n_output as f64).sqrt() };
        let (mut centred, mut cornered) = (0.0, 0.0);
        for seed in 0..200 {
            centred += place_motes(&mut rng(seed), n_hidden, n_output).unwrap().mean_hidden_output_distance();
            cornered += place_in_regions(&mut rng(seed), n_hidden, n_output, outer_side, corner)
                .unwrap()
                .mean_hidden_output_distance();
        }
        assert!(centred < 0.8 * cornered, "centred {centred} vs corner {cornered}");
    }

    #[test]
    fn forward_hops_sum_hidden_output_block() {
        let l = place_motes(&mut rng(4), 4, 3).unwrap();
        let expected: u64 = (0..4).flat_map(|i| (4..7).map(move |j| (i, j))).map(|(i, j)| l.hop_matrix[i][j] as u64).sum();
        assert_eq!(l.forward_message_hops(), expected);
    }

    #[test]
    fn json_round_trip() {
        let l = place_motes(&mut rng(6), 9, 3).unwrap();
        assert_eq!(MoteLayout::from_json(&l.to_json()).unwrap(), l);
    }
}
