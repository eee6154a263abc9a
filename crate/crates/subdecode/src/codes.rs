//! LDGM code machinery.
//!
//! A fixed binary sparsity pattern decides which data blocks each worker
//! stores; the generator matrix itself is re-drawn every iteration with
//! standard Gaussian values on that support. Decoding never inverts anything:
//! the SVD of the surviving rows yields an orthonormal basis `V` of their row
//! space plus its complement `Vtilde`, and the decoding basis carries
//! `L = D^{-1} U^T` so that `L G_s = V^T`.

use crate::kernel::{svd_small, DenseMatrix, DEFAULT_RANK_TOL};
use crate::seeding::{mix, stream};
use crate::simharness::ErasureModel;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;

/// Code shape: `P` workers holding linear combinations of `k` data blocks,
/// `d` non-zeros per generator row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeParams {
    pub workers: usize,
    pub splits: usize,
    pub degree: usize,
}

impl CodeParams {
    pub fn rate(&self) -> f64 {
        self.splits as f64 / self.workers as f64
    }
}

/// Fixed binary `P x k` placement matrix.
///
/// Block `j` is stored at worker `i` exactly when `mask[i][j]` is set, so the
/// pattern fully determines storage cost. The combined-cyclic construction
/// stacks two `k x k` cyclic matrices with `d` ones per row.
#[derive(Debug, Clone)]
pub struct SparsityPattern {
    params: CodeParams,
    mask: Vec<bool>, // row-major P x k
    /// Set when the two cyclic blocks could not be given distinct first-row
    /// supports (only possible at saturated degree d = k).
    degenerate_supports: bool,
}

impl SparsityPattern {
    /// Combined cyclic pattern: two stacked `k x k` cyclic blocks whose
    /// first-row supports (size `d`) are drawn independently and re-drawn
    /// until distinct. At `d = k` only one support exists; the distinctness
    /// requirement is waived and flagged.
    pub fn combined_cyclic(k: usize, d: usize, rng: &mut impl Rng) -> Result<Self> {
        if d == 0 || d > k {
            return Err(Error::InvalidArgument(format!(
                "degree {d} outside 1..={k}"
            )));
        }
        let s1 = draw_support(k, d, rng);
        let mut degenerate = false;
        let s2 = if d == k {
            degenerate = true;
            s1.clone()
        } else {
            loop {
                let cand = draw_support(k, d, rng);
                if cand != s1 {
                    break cand;
                }
            }
        };
        Ok(Self::combined_cyclic_from_supports(k, &s1, &s2, degenerate))
    }

    /// Deterministic combined-cyclic constructor from explicit first-row
    /// supports; row `i` of each block has ones at `(c + i) mod k`.
    pub fn combined_cyclic_from_supports(
        k: usize,
        s1: &[usize],
        s2: &[usize],
        degenerate_supports: bool,
    ) -> Self {
        let d = s1.len();
        debug_assert_eq!(s2.len(), d);
        let mut mask = vec![false; 2 * k * k];
        for (block, support) in [(0usize, s1), (1usize, s2)] {
            for i in 0..k {
                for &c in support {
                    mask[(block * k + i) * k + (c + i) % k] = true;
                }
            }
        }
        SparsityPattern {
            params: CodeParams {
                workers: 2 * k,
                splits: k,
                degree: d,
            },
            mask,
            degenerate_supports,
        }
    }

    /// General `(P, k)` pattern with `d` ones per row placed uniformly at
    /// random (no column-regularity constraint).
    pub fn random_regular(
        workers: usize,
        splits: usize,
        d: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if d == 0 || d > splits {
            return Err(Error::InvalidArgument(format!(
                "degree {d} outside 1..={splits}"
            )));
        }
        let mut mask = vec![false; workers * splits];
        for i in 0..workers {
            for c in rand::seq::index::sample(rng, splits, d) {
                mask[i * splits + c] = true;
            }
        }
        Ok(SparsityPattern {
            params: CodeParams {
                workers,
                splits,
                degree: d,
            },
            mask,
            degenerate_supports: false,
        })
    }

    /// Arbitrary explicit mask (rows are workers). The recorded degree is the
    /// maximum row weight.
    pub fn from_mask(rows: &[Vec<bool>]) -> Result<Self> {
        let workers = rows.len();
        let splits = rows.first().map_or(0, Vec::len);
        if workers == 0 || splits == 0 {
            return Err(Error::InvalidArgument("empty mask".to_string()));
        }
        let mut mask = Vec::with_capacity(workers * splits);
        let mut degree = 0usize;
        for r in rows {
            if r.len() != splits {
                return Err(Error::dim("ragged mask rows".to_string()));
            }
            degree = degree.max(r.iter().filter(|&&b| b).count());
            mask.extend_from_slice(r);
        }
        Ok(SparsityPattern {
            params: CodeParams {
                workers,
                splits,
                degree,
            },
            mask,
            degenerate_supports: false,
        })
    }

    pub fn params(&self) -> CodeParams {
        self.params
    }

    pub fn workers(&self) -> usize {
        self.params.workers
    }

    pub fn splits(&self) -> usize {
        self.params.splits
    }

    pub fn degree(&self) -> usize {
        self.params.degree
    }

    pub fn degenerate_supports(&self) -> bool {
        self.degenerate_supports
    }

    #[inline]
    pub fn has(&self, worker: usize, block: usize) -> bool {
        self.mask[worker * self.params.splits + block]
    }

    pub fn row_support(&self, worker: usize) -> impl Iterator<Item = usize> + '_ {
        let k = self.params.splits;
        self.mask[worker * k..(worker + 1) * k]
            .iter()
            .enumerate()
            .filter_map(|(j, &b)| b.then_some(j))
    }

    pub fn column_weights(&self) -> Vec<usize> {
        let k = self.params.splits;
        let mut w = vec![0usize; k];
        for i in 0..self.params.workers {
            for j in self.row_support(i) {
                w[j] += 1;
            }
        }
        w
    }

    /// Text serialisation: one line per row, `k` characters of `{0,1}`.
    pub fn to_text(&self) -> String {
        let k = self.params.splits;
        let mut out = String::with_capacity(self.params.workers * (k + 1));
        for i in 0..self.params.workers {
            for j in 0..k {
                out.push(if self.has(i, j) { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<bool>> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut row = Vec::with_capacity(line.len());
            for ch in line.chars() {
                match ch {
                    '0' => row.push(false),
                    '1' => row.push(true),
                    other => {
                        return Err(Error::Parse {
                            line: idx + 1,
                            reason: format!("unexpected character {other:?} in pattern row"),
                        })
                    }
                }
            }
            rows.push(row);
        }
        Self::from_mask(&rows)
    }
}

fn draw_support(k: usize, d: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut s: Vec<usize> = rand::seq::index::sample(rng, k, d).into_iter().collect();
    s.sort_unstable();
    s
}

/// One iteration's generator: Gaussian values on the pattern support.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    workers: usize,
    splits: usize,
    values: Vec<f64>, // row-major P x k, zero off support
    iteration: u64,
}

impl GeneratorMatrix {
    /// Draw the iteration-`t` generator. The sparsity pattern is fixed; only
    /// the non-zero values change, i.i.d. standard Gaussian from `rng`,
    /// filled in row-major support order.
    pub fn sample(pattern: &SparsityPattern, iteration: u64, rng: &mut impl Rng) -> Self {
        let (p, k) = (pattern.workers(), pattern.splits());
        let mut values = vec![0.0; p * k];
        for i in 0..p {
            for j in pattern.row_support(i) {
                values[i * k + j] = rng.sample(StandardNormal);
            }
        }
        GeneratorMatrix {
            workers: p,
            splits: k,
            values,
            iteration,
        }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn splits(&self) -> usize {
        self.splits
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    #[inline]
    pub fn get(&self, worker: usize, block: usize) -> f64 {
        self.values[worker * self.splits + block]
    }

    pub fn row(&self, worker: usize) -> &[f64] {
        &self.values[worker * self.splits..(worker + 1) * self.splits]
    }

    /// Row submatrix at the non-erased workers (rows come out in the given
    /// order). An empty survivor set yields a `0 x k` generator.
    pub fn restrict(&self, survivors: &[usize]) -> Result<PartialGenerator> {
        let mut rows = DenseMatrix::zeros(survivors.len(), self.splits);
        for (slot, &w) in survivors.iter().enumerate() {
            if w >= self.workers {
                return Err(Error::InvalidArgument(format!(
                    "survivor index {w} out of range for {} workers",
                    self.workers
                )));
            }
            rows.row_mut(slot).copy_from_slice(self.row(w));
        }
        Ok(PartialGenerator {
            survivors: survivors.to_vec(),
            rows,
        })
    }
}

/// The surviving rows of a generator matrix.
#[derive(Debug, Clone)]
pub struct PartialGenerator {
    survivors: Vec<usize>,
    rows: DenseMatrix, // |survivors| x k
}

impl PartialGenerator {
    pub fn new(survivors: Vec<usize>, rows: DenseMatrix) -> Self {
        debug_assert_eq!(survivors.len(), rows.n_rows());
        PartialGenerator { survivors, rows }
    }

    pub fn survivors(&self) -> &[usize] {
        &self.survivors
    }

    pub fn rows(&self) -> &DenseMatrix {
        &self.rows
    }

    pub fn n_survivors(&self) -> usize {
        self.survivors.len()
    }

    pub fn splits(&self) -> usize {
        self.rows.n_cols()
    }
}

/// The substitute-decoding basis `(V, Vtilde, L)` built from the SVD of a
/// partial generator `G_s = U D V^T`:
///
/// - `V` (`k x rank`) spans the row space of `G_s` and multiplies the freshly
///   decoded component,
/// - `Vtilde` (`k x (k - rank)`) spans the complement and multiplies the
///   substituted side information,
/// - `L = D^{-1} U^T` recovers `V^T mat(..)` from the received coded rows.
#[derive(Debug, Clone)]
pub struct DecodingBasis {
    v: DenseMatrix,
    v_tilde: DenseMatrix,
    l: DenseMatrix,
    rank: usize,
    delta: f64,
}

impl DecodingBasis {
    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    pub fn v_tilde(&self) -> &DenseMatrix {
        &self.v_tilde
    }

    pub fn l(&self) -> &DenseMatrix {
        &self.l
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Realised `1 - rank/k` for this draw.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `V V^T` (projector onto the surviving row space).
    pub fn projector(&self) -> DenseMatrix {
        self.v.matmul(&self.v.transpose()).expect("k x rank")
    }

    /// `Vtilde Vtilde^T` (projector onto the substituted complement).
    pub fn complement_projector(&self) -> DenseMatrix {
        self.v_tilde
            .matmul(&self.v_tilde.transpose())
            .expect("k x (k-rank)")
    }

    /// Core substitute-decoding combination: given the received coded block
    /// rows `W_s` (`|survivors| x b`) and the side-information blocks
    /// `fallback` (`k x b`), return `V (L W_s) + Vtilde (Vtilde^T fallback)`.
    pub fn substitute(
        &self,
        received: &DenseMatrix,
        fallback: &DenseMatrix,
    ) -> Result<DenseMatrix> {
        let projected = self.l.matmul(received)?; // rank x b  (= V^T mat)
        let mut out = self.v.matmul(&projected)?; // k x b
        if self.v_tilde.n_cols() > 0 {
            let kept = self.v_tilde.transpose().matmul(fallback)?;
            out.add_scaled(1.0, &self.v_tilde.matmul(&kept)?);
        }
        Ok(out)
    }
}

/// Build the decoding basis from the SVD of the surviving rows.
pub fn decode_basis(gs: &PartialGenerator, rank_tol: f64) -> Result<DecodingBasis> {
    let k = gs.splits();
    let svd = svd_small(gs.rows(), rank_tol)?;
    let rank = svd.numeric_rank;
    let vt_full = &svd.vt; // k x k, rows are right singular vectors
    let v = vt_full.slice_rows(0, rank).transpose();
    let v_tilde = vt_full.slice_rows(rank, k).transpose();
    let mut l = DenseMatrix::zeros(rank, gs.n_survivors());
    for r in 0..rank {
        let sigma = svd.singular_values[r];
        for s in 0..gs.n_survivors() {
            l.set(r, s, svd.u.get(s, r) / sigma);
        }
    }
    let delta = 1.0 - rank as f64 / k as f64;
    Ok(DecodingBasis {
        v,
        v_tilde,
        l,
        rank,
        delta,
    })
}

/// Monte-Carlo estimate of `delta = 1 - E[rank(G_s)] / k` under the given
/// erasure model, averaging over fresh (generator, survivor-set) pairs.
/// Samples use streams keyed by sample index, so the estimate does not depend
/// on evaluation order.
pub fn estimate_delta(
    pattern: &SparsityPattern,
    erasure: &ErasureModel,
    n_samples: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be >= 1".to_string()));
    }
    let base = rng.random::<u64>();
    let k = pattern.splits();
    let mut total = 0.0;
    for i in 0..n_samples {
        let mut s = stream(mix(base, i as u64));
        let survivors = erasure.draw_survivors(pattern.workers(), &mut s)?;
        let gen = GeneratorMatrix::sample(pattern, 0, &mut s);
        let gs = gen.restrict(&survivors)?;
        let rank = svd_small(gs.rows(), DEFAULT_RANK_TOL)?.numeric_rank;
        total += 1.0 - rank as f64 / k as f64;
    }
    Ok(total / n_samples as f64)
}

/// Enumeration counterpart of [`estimate_delta`]: average `1 - rank/k` over
/// **all** survivor subsets of size `P - n_erased`, with `value_samples`
/// generator draws per subset. Guarded against combinatorial blow-up.
pub fn exact_delta_small(
    pattern: &SparsityPattern,
    n_erased: usize,
    value_samples: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    let p = pattern.workers();
    if n_erased > p {
        return Err(Error::InvalidArgument(format!(
            "cannot erase {n_erased} of {p} workers"
        )));
    }
    if value_samples == 0 {
        return Err(Error::InvalidArgument(
            "value_samples must be >= 1".to_string(),
        ));
    }
    let n_survive = p - n_erased;
    let subsets = binomial(p as u128, n_survive as u128);
    const LIMIT: u128 = 1_000_000;
    if subsets > LIMIT {
        return Err(Error::TooManySubsets {
            subsets,
            limit: LIMIT,
        });
    }
    if n_survive == 0 {
        return Ok(1.0);
    }

    let base = rng.random::<u64>();
    let k = pattern.splits();
    let mut total = 0.0;
    let mut count = 0u64;
    let mut subset: Vec<usize> = (0..n_survive).collect();
    loop {
        for sample in 0..value_samples {
            let mut s = stream(mix(base, count ^ ((sample as u64) << 40)));
            let gen = GeneratorMatrix::sample(pattern, 0, &mut s);
            let gs = gen.restrict(&subset)?;
            let rank = svd_small(gs.rows(), DEFAULT_RANK_TOL)?.numeric_rank;
            total += 1.0 - rank as f64 / k as f64;
        }
        count += 1;
        if !next_combination(&mut subset, p) {
            break;
        }
    }
    Ok(total / (count as f64 * value_samples as f64))
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Advance `subset` to the next lexicographic k-combination of `0..n`.
fn next_combination(subset: &mut [usize], n: usize) -> bool {
    let k = subset.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if subset[i] < n - (k - i) {
            subset[i] += 1;
            for j in (i + 1)..k {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::stream;
    use crate::simharness::ErasureModel;

    #[test]
    fn combined_cyclic_saturated_degree_is_all_ones() {
        let mut rng = stream(1);
        let p = SparsityPattern::combined_cyclic(2, 2, &mut rng).unwrap();
        assert!(p.degenerate_supports());
        for i in 0..4 {
            for j in 0..2 {
                assert!(p.has(i, j));
            }
        }
    }

    #[test]
    fn combined_cyclic_hand_shift() {
        // First rows e1 and e2: rows must read e1,e2,e3,e2,e3,e1.
        let p = SparsityPattern::combined_cyclic_from_supports(3, &[0], &[1], false);
        let expect = [
            [true, false, false],
            [false, true, false],
            [false, false, true],
            [false, true, false],
            [false, false, true],
            [true, false, false],
        ];
        for (i, row) in expect.iter().enumerate() {
            for (j, &want) in row.iter().enumerate() {
                assert_eq!(p.has(i, j), want, "row {i} col {j}");
            }
        }
    }

    #[test]
    fn combined_cyclic_columns_are_regular() {
        let mut rng = stream(7);
        let p = SparsityPattern::combined_cyclic(10, 3, &mut rng).unwrap();
        let weights = p.column_weights();
        for w in weights {
            assert_eq!(w, 6);
        }
        // Each cyclic block alone contributes exactly d ones per column.
        for half in [0..10usize, 10..20usize] {
            let mut col = [0usize; 10];
            for i in half {
                for j in p.row_support(i) {
                    col[j] += 1;
                }
            }
            assert!(col.iter().all(|&c| c == 3));
        }
    }

    #[test]
    fn combined_cyclic_supports_distinct() {
        for seed in 0..20 {
            let mut rng = stream(seed);
            let p = SparsityPattern::combined_cyclic(5, 2, &mut rng).unwrap();
            assert!(!p.degenerate_supports());
            let s1: Vec<usize> = p.row_support(0).collect();
            let s2: Vec<usize> = p.row_support(5).collect();
            assert_ne!(s1, s2);
        }
    }

    #[test]
    fn pattern_text_round_trip() {
        let mut rng = stream(3);
        let p = SparsityPattern::combined_cyclic(6, 2, &mut rng).unwrap();
        let text = p.to_text();
        let q = SparsityPattern::from_text(&text).unwrap();
        assert_eq!(p.mask, q.mask);
        assert_eq!(q.degree(), 2);
    }

    #[test]
    fn pattern_text_rejects_garbage() {
        assert!(SparsityPattern::from_text("01\n0x\n").is_err());
    }

    #[test]
    fn generator_respects_support_and_determinism() {
        let mut rng = stream(5);
        let p = SparsityPattern::combined_cyclic(8, 2, &mut rng).unwrap();
        let g1 = GeneratorMatrix::sample(&p, 3, &mut stream(42));
        let g2 = GeneratorMatrix::sample(&p, 3, &mut stream(42));
        let g3 = GeneratorMatrix::sample(&p, 4, &mut stream(43));
        assert_eq!(g1.values, g2.values);
        assert_ne!(g1.values, g3.values);
        for i in 0..p.workers() {
            for j in 0..p.splits() {
                if p.has(i, j) {
                    assert_ne!(g1.get(i, j), 0.0);
                } else {
                    assert_eq!(g1.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn generator_moments() {
        // Support entries should look standard normal.
        let mut rng = stream(11);
        let p = SparsityPattern::combined_cyclic(10, 3, &mut rng).unwrap();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut n = 0usize;
        let mut draws = stream(99);
        while n < 100_000 {
            let g = GeneratorMatrix::sample(&p, 0, &mut draws);
            for i in 0..p.workers() {
                for j in p.row_support(i) {
                    let v = g.get(i, j);
                    sum += v;
                    sum_sq += v * v;
                    n += 1;
                }
            }
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    fn example_one_pattern() -> SparsityPattern {
        SparsityPattern::from_mask(&[
            vec![true, false],
            vec![false, true],
            vec![true, true],
        ])
        .unwrap()
    }

    #[test]
    fn restrict_full_empty_and_single_row() {
        let p = example_one_pattern();
        let g = GeneratorMatrix::sample(&p, 0, &mut stream(17));
        let all = g.restrict(&[0, 1, 2]).unwrap();
        assert_eq!(all.rows().n_rows(), 3);
        for i in 0..3 {
            assert_eq!(all.rows().row(i), g.row(i));
        }
        let empty = g.restrict(&[]).unwrap();
        assert_eq!(empty.rows().n_rows(), 0);
        // Surviving only the (1,1) row leaves the single combined row.
        let third = g.restrict(&[2]).unwrap();
        assert_eq!(third.rows().row(0), &[g.get(2, 0), g.get(2, 1)]);
        assert!(third.rows().row(0).iter().all(|&v| v != 0.0));
    }

    #[test]
    fn decode_basis_full_rank_square() {
        let p = example_one_pattern();
        let g = GeneratorMatrix::sample(&p, 0, &mut stream(23));
        let gs = g.restrict(&[0, 1]).unwrap();
        let basis = decode_basis(&gs, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(basis.rank(), 2);
        assert_eq!(basis.v_tilde().n_cols(), 0);
        // L G_s = V^T
        let lg = basis.l().matmul(gs.rows()).unwrap();
        assert!(lg.max_abs_diff(&basis.v().transpose()) < 1e-8);
        assert!(basis.v().gram_deviation() < 1e-9);
    }

    #[test]
    fn decode_basis_all_erased() {
        let p = example_one_pattern();
        let g = GeneratorMatrix::sample(&p, 0, &mut stream(29));
        let gs = g.restrict(&[]).unwrap();
        let basis = decode_basis(&gs, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(basis.rank(), 0);
        assert_eq!(basis.v().n_cols(), 0);
        assert_eq!(basis.v_tilde().n_cols(), 2);
        assert!(basis.projector().max_abs() == 0.0);
        assert!(
            basis
                .complement_projector()
                .max_abs_diff(&DenseMatrix::identity(2))
                < 1e-12
        );
    }

    #[test]
    fn decode_basis_hand_rank_one() {
        let rows = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let gs = PartialGenerator::new(vec![0, 1], rows);
        let basis = decode_basis(&gs, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(basis.rank(), 1);
        let want = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(basis.projector().max_abs_diff(&want) < 1e-12);
        let want_c = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(basis.complement_projector().max_abs_diff(&want_c) < 1e-12);
    }

    #[test]
    fn basis_identities_on_random_draws() {
        let mut rng = stream(31);
        let p = SparsityPattern::combined_cyclic(8, 2, &mut rng).unwrap();
        let erasure = ErasureModel::fixed_fraction(0.5).unwrap();
        for seed in 0..50u64 {
            let mut s = stream(1000 + seed);
            let survivors = erasure.draw_survivors(p.workers(), &mut s).unwrap();
            let g = GeneratorMatrix::sample(&p, seed, &mut s);
            let gs = g.restrict(&survivors).unwrap();
            let basis = decode_basis(&gs, DEFAULT_RANK_TOL).unwrap();
            // V V^T + Vt Vt^T = I and L G_s = V^T.
            let mut sum = basis.projector();
            sum.add_scaled(1.0, &basis.complement_projector());
            assert!(sum.max_abs_diff(&DenseMatrix::identity(8)) < 1e-9);
            let lg = basis.l().matmul(gs.rows()).unwrap();
            assert!(lg.max_abs_diff(&basis.v().transpose()) < 1e-8);
            if basis.v().n_cols() > 0 && basis.v_tilde().n_cols() > 0 {
                let cross = basis.v().transpose().matmul(basis.v_tilde()).unwrap();
                assert!(cross.max_abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rank_monotone_in_survivors() {
        let mut rng = stream(37);
        let p = SparsityPattern::combined_cyclic(6, 2, &mut rng).unwrap();
        for seed in 0..20u64 {
            let g = GeneratorMatrix::sample(&p, seed, &mut stream(seed));
            let mut survivors: Vec<usize> = Vec::new();
            let mut last_rank = 0;
            for w in 0..p.workers() {
                survivors.push(w);
                let gs = g.restrict(&survivors).unwrap();
                let rank = decode_basis(&gs, DEFAULT_RANK_TOL).unwrap().rank();
                assert!(rank >= last_rank);
                last_rank = rank;
            }
            assert_eq!(last_rank, 6);
        }
    }

    #[test]
    fn projector_conjugation() {
        // decode_basis(G_s * Pi) must give projector Pi^T (V V^T) Pi.
        let mut rng = stream(41);
        let p = SparsityPattern::combined_cyclic(5, 2, &mut rng).unwrap();
        let erasure = ErasureModel::fixed_fraction(0.5).unwrap();
        let raw = DenseMatrix::from_fn(5, 5, |_, _| rng.random::<f64>() - 0.5);
        let (pi, _) = crate::kernel::qr_small(&raw).unwrap();
        for seed in 0..10u64 {
            let mut s = stream(2000 + seed);
            let survivors = erasure.draw_survivors(p.workers(), &mut s).unwrap();
            let g = GeneratorMatrix::sample(&p, seed, &mut s);
            let gs = g.restrict(&survivors).unwrap();
            let basis = decode_basis(&gs, DEFAULT_RANK_TOL).unwrap();
            let rotated_rows = gs.rows().matmul(&pi).unwrap();
            let rotated = PartialGenerator::new(gs.survivors().to_vec(), rotated_rows);
            let basis_rot = decode_basis(&rotated, DEFAULT_RANK_TOL).unwrap();
            let want = pi
                .transpose()
                .matmul(&basis.projector())
                .unwrap()
                .matmul(&pi)
                .unwrap();
            assert!(basis_rot.projector().max_abs_diff(&want) < 1e-8);
        }
    }

    #[test]
    fn delta_zero_without_erasures() {
        let mut rng = stream(43);
        let p = SparsityPattern::combined_cyclic(6, 1, &mut rng).unwrap();
        let erasure = ErasureModel::fixed_fraction(0.0).unwrap();
        let d = estimate_delta(&p, &erasure, 200, &mut rng).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn exact_delta_degenerate_cases() {
        let mut rng = stream(47);
        let p = SparsityPattern::combined_cyclic(2, 2, &mut rng).unwrap();
        // All erased: delta = 1.
        assert_eq!(exact_delta_small(&p, 4, 3, &mut rng).unwrap(), 1.0);
        // Two survivors of the all-ones pattern: Gaussian 2x2, full rank a.s.
        let d = exact_delta_small(&p, 2, 10, &mut rng).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn exact_delta_matches_monte_carlo() {
        let mut rng = stream(53);
        let p = SparsityPattern::combined_cyclic(4, 2, &mut rng).unwrap();
        let exact = exact_delta_small(&p, 4, 200, &mut rng).unwrap();
        let erasure = ErasureModel::fixed_fraction(0.5).unwrap();
        let n = 20_000;
        let est = estimate_delta(&p, &erasure, n, &mut rng).unwrap();
        // Conservative bound on 3 standard errors of the Monte-Carlo mean:
        // per-sample delta is in [0,1], so SE <= 0.5 / sqrt(n).
        let slack = 3.0 * 0.5 / (n as f64).sqrt();
        assert!(
            (exact - est).abs() < slack,
            "exact {exact:.4} vs estimate {est:.4} (slack {slack:.4})"
        );
    }

    #[test]
    fn exact_delta_guards_blow_up() {
        let mut rng = stream(59);
        let p = SparsityPattern::random_regular(60, 30, 2, &mut rng).unwrap();
        match exact_delta_small(&p, 30, 1, &mut rng) {
            Err(Error::TooManySubsets { .. }) => {}
            other => panic!("expected TooManySubsets, got {other:?}"),
        }
    }
}
