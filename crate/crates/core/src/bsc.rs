//! Blind spatial combining: fixed quasi-uniform combining-vector sets applied
//! across receive antennas, plus channel-estimate-based combining (MRC and
//! zero-forcing) for the preamble-assisted receiver.
//!
//! A combining vector v turns the per-antenna grids y_a into one stream
//! z = sum_a conj(v_a) * y_a. With v aligned to a user's channel the user's
//! energy adds coherently; with v orthogonal to an interferer's channel the
//! interferer cancels. The built-in sets cover the receive space densely
//! enough that every channel direction is within a usable angle of some
//! vector, without any channel knowledge at all.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::waveform::ChipGrid;

/// Which built-in combining-vector set to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorSetKind {
    /// Six vectors for two receive antennas.
    V2Of6,
    /// Twenty-four two-tap vectors for four receive antennas.
    V4Of24,
    /// Sixteen full-support vectors for four receive antennas.
    V4Of16,
    /// Just [1]: no spatial processing, receiver listens to one antenna.
    Single,
}

impl VectorSetKind {
    pub fn num_antennas(self) -> usize {
        match self {
            VectorSetKind::V2Of6 => 2,
            VectorSetKind::V4Of24 | VectorSetKind::V4Of16 => 4,
            VectorSetKind::Single => 1,
        }
    }
}

/// A set of unit-norm combining vectors for a fixed antenna count.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet {
    num_antennas: usize,
    vectors: Vec<Vec<Complex64>>,
}

impl VectorSet {
    pub fn builtin(kind: VectorSetKind) -> VectorSet {
        let vectors = match kind {
            VectorSetKind::V2Of6 => v2_of_6(),
            VectorSetKind::V4Of24 => v4_of_24(),
            VectorSetKind::V4Of16 => v4_of_16(),
            VectorSetKind::Single => {
                vec![vec![Complex64::new(1.0, 0.0)]]
            }
        };
        VectorSet { num_antennas: kind.num_antennas(), vectors }
    }

    pub fn from_vectors(vectors: Vec<Vec<Complex64>>) -> Result<VectorSet> {
        let num_antennas = vectors.first().map_or(0, Vec::len);
        if num_antennas == 0 {
            return Err(Error::Config("vector set needs nonempty vectors".into()));
        }
        if vectors.iter().any(|v| v.len() != num_antennas) {
            return Err(Error::Config("vectors must share one length".into()));
        }
        Ok(VectorSet { num_antennas, vectors })
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, index: usize) -> &[Complex64] {
        &self.vectors[index]
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[Complex64]> {
        self.vectors.iter().map(Vec::as_slice)
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn v2_of_6() -> Vec<Vec<Complex64>> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    vec![
        vec![c(1.0, 0.0), c(0.0, 0.0)],
        vec![c(0.0, 0.0), c(1.0, 0.0)],
        vec![c(s, 0.0), c(s, 0.0)],
        vec![c(s, 0.0), c(-s, 0.0)],
        vec![c(s, 0.0), c(0.0, s)],
        vec![c(s, 0.0), c(0.0, -s)],
    ]
}

/// Two-tap vectors: every antenna pair in lexicographic order, second tap
/// running over +1, -1 (first twelve) then +i, -i (last twelve).
fn v4_of_24() -> Vec<Vec<Complex64>> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let pairs = [(0usize, 1usize), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    let mut out = Vec::with_capacity(24);
    for signs in [[c(1.0, 0.0), c(-1.0, 0.0)], [c(0.0, 1.0), c(0.0, -1.0)]] {
        for &(i, j) in &pairs {
            for &sign in &signs {
                let mut v = vec![c(0.0, 0.0); 4];
                v[i] = c(s, 0.0);
                v[j] = sign * s;
                out.push(v);
            }
        }
    }
    out
}

/// Full-support vectors with quaternary entries, scaled to unit norm.
fn v4_of_16() -> Vec<Vec<Complex64>> {
    const Q: [[(f64, f64); 4]; 16] = [
        [(1.0, 0.0), (1.0, 0.0), (1.0, 0.0), (1.0, 0.0)],
        [(1.0, 0.0), (-1.0, 0.0), (1.0, 0.0), (-1.0, 0.0)],
        [(1.0, 0.0), (1.0, 0.0), (-1.0, 0.0), (-1.0, 0.0)],
        [(1.0, 0.0), (-1.0, 0.0), (-1.0, 0.0), (1.0, 0.0)],
        [(1.0, 0.0), (0.0, -1.0), (0.0, -1.0), (1.0, 0.0)],
        [(1.0, 0.0), (0.0, 1.0), (0.0, 1.0), (-1.0, 0.0)],
        [(1.0, 0.0), (0.0, -1.0), (0.0, -1.0), (-1.0, 0.0)],
        [(1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, 0.0)],
        [(1.0, 0.0), (-1.0, 0.0), (0.0, -1.0), (0.0, -1.0)],
        [(1.0, 0.0), (1.0, 0.0), (0.0, -1.0), (0.0, 1.0)],
        [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, 1.0)],
        [(1.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.0, -1.0)],
        [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, 1.0)],
        [(1.0, 0.0), (0.0, -1.0), (-1.0, 0.0), (0.0, -1.0)],
        [(1.0, 0.0), (0.0, 1.0), (1.0, 0.0), (0.0, -1.0)],
        [(1.0, 0.0), (0.0, -1.0), (1.0, 0.0), (0.0, 1.0)],
    ];
    Q.iter()
        .map(|row| row.iter().map(|&(re, im)| c(re, im) * 0.5).collect())
        .collect()
}

/// Combine per-antenna grids into one stream: z = sum_a conj(v_a) * y_a.
pub fn combine(antennas: &[ChipGrid], v: &[Complex64]) -> Result<ChipGrid> {
    if antennas.is_empty() {
        return Err(Error::Usage("combine needs at least one antenna".into()));
    }
    if v.len() != antennas.len() {
        return Err(Error::Usage(format!(
            "combining vector has {} taps for {} antennas",
            v.len(),
            antennas.len()
        )));
    }
    let mut z = ChipGrid::zeros(antennas[0].spread_len(), antennas[0].num_symbols());
    for (grid, &va) in antennas.iter().zip(v) {
        z.add_scaled(grid, va.conj());
    }
    Ok(z)
}

/// How to build a combining vector from channel estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CscMode {
    /// Maximum-ratio combining toward the target's estimate.
    Mrc,
    /// Zero-forcing: null every other listed estimate (needs at most as many
    /// estimates as antennas).
    Zfc,
}

/// Channel-statistics combining: build a unit-norm combining vector for
/// `target` given the channel estimates of all streams under consideration.
///
/// MRC ignores non-target estimates. ZFC solves for the vector whose inner
/// products with the listed estimates are exactly [0, .., 1, .., 0] (1 at the
/// target), then normalizes; it requires `estimates.len() <= num_antennas`
/// and linearly independent estimates, failing with `DegenerateCombining`
/// otherwise.
pub fn csc_combine(
    estimates: &[Vec<Complex64>],
    target: usize,
    mode: CscMode,
) -> Result<Vec<Complex64>> {
    if target >= estimates.len() {
        return Err(Error::Usage(format!(
            "target {target} outside {} estimates",
            estimates.len()
        )));
    }
    let m = estimates[target].len();
    if m == 0 || estimates.iter().any(|h| h.len() != m) {
        return Err(Error::Usage("estimates must share one antenna count".into()));
    }
    match mode {
        CscMode::Mrc => {
            let h = &estimates[target];
            let norm = h.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if norm <= 0.0 || !norm.is_finite() {
                return Err(Error::DegenerateCombining(
                    "target estimate has zero norm".into(),
                ));
            }
            Ok(h.iter().map(|x| x / norm).collect())
        }
        CscMode::Zfc => {
            let n = estimates.len();
            if n > m {
                return Err(Error::DegenerateCombining(format!(
                    "{n} streams cannot be zero-forced with {m} antennas"
                )));
            }
            // Gram matrix G = H^H H of the stacked estimates.
            let mut g = CMat::zeros(n);
            for i in 0..n {
                for j in 0..n {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for a in 0..m {
                        acc += estimates[i][a].conj() * estimates[j][a];
                    }
                    g.set(i, j, acc);
                }
            }
            let chol = g.cholesky().map_err(|_| {
                Error::DegenerateCombining(
                    "channel estimates are linearly dependent".into(),
                )
            })?;
            let mut e_t = vec![Complex64::new(0.0, 0.0); n];
            e_t[target] = Complex64::new(1.0, 0.0);
            let coeffs = chol.solve(&e_t);
            // v = H * coeffs satisfies h_j^H v = delta_{j,target}.
            let mut v = vec![Complex64::new(0.0, 0.0); m];
            for (h, &co) in estimates.iter().zip(&coeffs) {
                for (va, &ha) in v.iter_mut().zip(h) {
                    *va += ha * co;
                }
            }
            let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if norm <= 0.0 || !norm.is_finite() {
                return Err(Error::DegenerateCombining(
                    "zero-forcing produced a null vector".into(),
                ));
            }
            for va in &mut v {
                *va /= norm;
            }
            Ok(v)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_channel;
    use crate::waveform::spread_symbols;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-12;

    fn inner(v: &[Complex64], h: &[Complex64]) -> Complex64 {
        v.iter().zip(h).map(|(a, b)| a.conj() * b).sum()
    }

    #[test]
    fn test_builtin_sets_are_unit_norm_and_sized() {
        for (kind, len, m) in [
            (VectorSetKind::V2Of6, 6, 2),
            (VectorSetKind::V4Of24, 24, 4),
            (VectorSetKind::V4Of16, 16, 4),
            (VectorSetKind::Single, 1, 1),
        ] {
            let set = VectorSet::builtin(kind);
            assert_eq!(set.len(), len);
            assert_eq!(set.num_antennas(), m);
            for v in set.vectors() {
                let norm: f64 = v.iter().map(|x| x.norm_sqr()).sum();
                assert!((norm - 1.0).abs() < TOL, "{kind:?}");
            }
        }
    }

    #[test]
    fn test_two_antenna_set_matches_definition() {
        let set = VectorSet::builtin(VectorSetKind::V2Of6);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let expect = [
            [c(1.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(1.0, 0.0)],
            [c(s, 0.0), c(s, 0.0)],
            [c(s, 0.0), c(-s, 0.0)],
            [c(s, 0.0), c(0.0, s)],
            [c(s, 0.0), c(0.0, -s)],
        ];
        for (i, want) in expect.iter().enumerate() {
            assert_eq!(set.vector(i), want, "vector {i}");
        }
    }

    #[test]
    fn test_four_antenna_sets_spot_values() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let set24 = VectorSet::builtin(VectorSetKind::V4Of24);
        assert_eq!(set24.vector(0), &[c(s, 0.0), c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        // First vector of the imaginary block.
        assert_eq!(
            set24.vector(12),
            &[c(s, 0.0), c(0.0, s), c(0.0, 0.0), c(0.0, 0.0)]
        );
        assert_eq!(
            set24.vector(23),
            &[c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0), c(0.0, -s)]
        );

        let set16 = VectorSet::builtin(VectorSetKind::V4Of16);
        assert_eq!(
            set16.vector(0),
            &[c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0)]
        );
        assert_eq!(
            set16.vector(4),
            &[c(0.5, 0.0), c(0.0, -0.5), c(0.0, -0.5), c(0.5, 0.0)]
        );
    }

    #[test]
    fn test_builtin_sets_have_no_duplicate_directions() {
        for kind in [VectorSetKind::V2Of6, VectorSetKind::V4Of24, VectorSetKind::V4Of16]
        {
            let set = VectorSet::builtin(kind);
            for i in 0..set.len() {
                for j in (i + 1)..set.len() {
                    let corr = inner(set.vector(i), set.vector(j)).norm();
                    assert!(corr < 1.0 - 1e-9, "{kind:?} {i},{j}");
                }
            }
        }
    }

    #[test]
    fn test_equal_power_collision_separates_exactly() {
        // Two users with channels [1,1] and [1,-1]: each antenna sees an
        // equal-power collision, yet the sum/difference combiners isolate the
        // users exactly.
        let code = [c(0.5, 0.0), c(0.0, 0.5), c(-0.5, 0.0), c(0.0, -0.5)];
        let s1 = [c(1.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0)];
        let s2 = [c(-1.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0)];
        let x1 = spread_symbols(&s1, &code);
        let x2 = spread_symbols(&s2, &code);
        let h1 = [c(1.0, 0.0), c(1.0, 0.0)];
        let h2 = [c(1.0, 0.0), c(-1.0, 0.0)];
        let mut y = vec![ChipGrid::zeros(4, 3), ChipGrid::zeros(4, 3)];
        for a in 0..2 {
            y[a].add_scaled(&x1, h1[a]);
            y[a].add_scaled(&x2, h2[a]);
        }
        let set = VectorSet::builtin(VectorSetKind::V2Of6);
        // Vector [1,1]/sqrt(2): user 1 only, amplitude sqrt(2).
        let z = combine(&y, set.vector(2)).unwrap();
        let mut leak = ChipGrid::zeros(4, 3);
        leak.add_scaled(&z, c(1.0, 0.0));
        leak.sub_scaled(&x1, c(2.0f64.sqrt(), 0.0));
        assert!(leak.norm_sqr().sqrt() < 1e-10, "user 2 leaked through [1,1]");
        // Vector [1,-1]/sqrt(2): user 2 only.
        let z = combine(&y, set.vector(3)).unwrap();
        let mut leak = ChipGrid::zeros(4, 3);
        leak.add_scaled(&z, c(1.0, 0.0));
        leak.sub_scaled(&x2, c(2.0f64.sqrt(), 0.0));
        assert!(leak.norm_sqr().sqrt() < 1e-10, "user 1 leaked through [1,-1]");
    }

    #[test]
    fn test_mrc_recovers_channel_norm_amplitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let code = [c(0.5, 0.0), c(0.5, 0.0), c(-0.5, 0.0), c(0.5, 0.0)];
        let syms = [c(1.0, 0.0), c(-1.0, 0.0)];
        let x = spread_symbols(&syms, &code);
        for _ in 0..20 {
            let h = draw_channel(&mut rng, 2);
            let y: Vec<ChipGrid> = h
                .iter()
                .map(|&ha| {
                    let mut g = ChipGrid::zeros(4, 2);
                    g.add_scaled(&x, ha);
                    g
                })
                .collect();
            let v = csc_combine(&[h.clone()], 0, CscMode::Mrc).unwrap();
            let z = combine(&y, &v).unwrap();
            let hnorm = h.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            let mut diff = ChipGrid::zeros(4, 2);
            diff.add_scaled(&z, c(1.0, 0.0));
            diff.sub_scaled(&x, c(hnorm, 0.0));
            assert!(diff.norm_sqr().sqrt() < 1e-10);
        }
    }

    #[test]
    fn test_zero_forcing_nulls_other_streams() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for m in [2usize, 4] {
            for _ in 0..20 {
                let hs: Vec<Vec<Complex64>> =
                    (0..m).map(|_| draw_channel(&mut rng, m)).collect();
                for target in 0..m {
                    let v = csc_combine(&hs, target, CscMode::Zfc).unwrap();
                    let norm: f64 = v.iter().map(|x| x.norm_sqr()).sum();
                    assert!((norm - 1.0).abs() < 1e-9);
                    for (j, h) in hs.iter().enumerate() {
                        let g = inner(&v, h).norm();
                        if j == target {
                            assert!(g > 1e-6, "target suppressed");
                        } else {
                            assert!(g < 1e-9, "stream {j} not nulled: {g}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn test_vector_sets_cover_random_channels() {
        // Quasi-uniformity: for any channel direction some vector in the set
        // keeps at least half the channel's amplitude after combining.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for kind in [VectorSetKind::V2Of6, VectorSetKind::V4Of24, VectorSetKind::V4Of16]
        {
            let set = VectorSet::builtin(kind);
            let m = set.num_antennas();
            let mut worst = f64::INFINITY;
            for _ in 0..2000 {
                let h = draw_channel(&mut rng, m);
                let hnorm = h.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
                let best = set
                    .vectors()
                    .map(|v| inner(v, &h).norm() / hnorm)
                    .fold(0.0f64, f64::max);
                worst = worst.min(best);
            }
            assert!(worst >= 0.5, "{kind:?} worst alignment {worst}");
        }
    }

    #[test]
    fn test_degenerate_inputs_are_rejected() {
        let h = vec![c(1.0, 0.0), c(0.0, 1.0)];
        // Duplicate estimates cannot be zero-forced.
        let err = csc_combine(&[h.clone(), h.clone()], 0, CscMode::Zfc).unwrap_err();
        assert!(matches!(err, Error::DegenerateCombining(_)));
        // More streams than antennas.
        let hs = vec![h.clone(), vec![c(1.0, 0.0), c(1.0, 0.0)], vec![c(0.0, 1.0), c(1.0, 0.0)]];
        assert!(matches!(
            csc_combine(&hs, 1, CscMode::Zfc),
            Err(Error::DegenerateCombining(_))
        ));
        // Zero-norm MRC target.
        assert!(matches!(
            csc_combine(&[vec![c(0.0, 0.0); 2]], 0, CscMode::Mrc),
            Err(Error::DegenerateCombining(_))
        ));
        // Shape errors.
        assert!(csc_combine(&[h.clone()], 1, CscMode::Mrc).is_err());
        let y = [ChipGrid::zeros(4, 2)];
        assert!(combine(&y, &[c(1.0, 0.0), c(0.0, 0.0)]).is_err());
        assert!(combine(&[], &[]).is_err());
    }
}
