//! Independent oracles: a brute-force semiring product, a central
//! finite-difference gradient checker, and statistical initialization audits.
//!
//! Everything here deliberately avoids the batched kernels in
//! [`crate::linalg`]: the reference product folds scalar `add`/`mul` pairwise
//! with no vectorized shift, so agreement between the two routes is a real
//! check rather than a tautology.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::linalg;
use crate::model::{FcModel, ModelConfig};
use crate::semiring::{SemiringKind, SemiringSpec};
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Relative error `|a − f| / max(|a|, |f|, 1e-8)`.
pub fn rel_err(a: f64, f: f64) -> f64 {
    (a - f).abs() / f64::max(a.abs(), f64::max(f.abs(), 1e-8))
}

/// Central finite differences `(f(x+h·e_i) − f(x−h·e_i)) / (2h)`.
pub fn finite_diff_grad<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe);
        probe[i] = orig - h;
        let minus = f(&probe);
        probe[i] = orig;
        grad[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Naive double loop over `y_i = ⊕_j (w_ij ⊙ x_j)` using the scalar semiring
/// operations directly; the log-plus shift happens inside the scalar `add`.
pub fn reference_matvec(spec: SemiringSpec, w: &Tensor<f64>, x: &[f64]) -> Vec<f64> {
    let (n, m) = (w.rows(), w.cols());
    debug_assert_eq!(m, x.len());
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut acc = spec.zero::<f64>();
        for j in 0..m {
            acc = spec.add(acc, spec.mul(w.at2(i, j), x[j]));
        }
        y[i] = acc;
    }
    y
}

/// Smallest gap between the top two candidates `w_ij + x_j` across all rows
/// and batch elements (tropical only; other semirings have no ties and
/// report infinity). A gap of zero means an exact tie.
pub fn tie_distance(spec: SemiringSpec, w: &Tensor<f64>, x: &Tensor<f64>) -> f64 {
    if !matches!(spec.kind, SemiringKind::MaxPlus | SemiringKind::MinPlus) {
        return f64::INFINITY;
    }
    let minimize = spec.kind == SemiringKind::MinPlus;
    let (n, m) = (w.rows(), w.cols());
    let batch: Vec<&[f64]> = if x.shape().len() == 2 {
        (0..x.rows()).map(|b| x.row(b)).collect()
    } else {
        vec![x.data()]
    };
    let mut min_gap = f64::INFINITY;
    for row in batch {
        debug_assert_eq!(row.len(), m);
        for i in 0..n {
            let mut best = f64::INFINITY;
            let mut second = f64::INFINITY;
            for j in 0..m {
                let term = w.at2(i, j) + row[j];
                let key = if minimize { term } else { -term };
                if key < best {
                    second = best;
                    best = key;
                } else if key < second {
                    second = key;
                }
            }
            if second.is_finite() {
                min_gap = min_gap.min(second - best);
            }
        }
    }
    min_gap
}

/// Which input column wins each row of `w` for the given input, under
/// lowest-index tie-breaking. Returns per-column win counts.
pub fn win_counts(w: &Tensor<f64>, x: &[f64], minimize: bool) -> Vec<usize> {
    let (n, m) = (w.rows(), w.cols());
    let mut counts = vec![0usize; m];
    for i in 0..n {
        let mut winner = 0usize;
        let mut best = w.at2(i, 0) + x[0];
        for j in 1..m {
            let term = w.at2(i, j) + x[j];
            if (minimize && term < best) || (!minimize && term > best) {
                best = term;
                winner = j;
            }
        }
        counts[winner] += 1;
    }
    counts
}

/// Win-count audit of an initialized weight matrix over random inputs drawn
/// uniformly from `[-half_width, half_width]^m`.
#[derive(Debug, Clone, Serialize)]
pub struct InitAudit {
    pub trials: usize,
    /// Trials in which every input column won at least one output row.
    pub all_columns_won: usize,
    /// Win counts of the first trial.
    pub first_counts: Vec<usize>,
    /// True when every trial produced identical win counts.
    pub deterministic: bool,
    /// Summed win counts per column over all trials.
    pub total_counts: Vec<usize>,
}

pub fn init_audit(
    w: &Tensor<f64>,
    half_width: f64,
    trials: usize,
    seed: u64,
    minimize: bool,
) -> InitAudit {
    let m = w.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut first: Option<Vec<usize>> = None;
    let mut deterministic = true;
    let mut all_won = 0usize;
    let mut totals = vec![0usize; m];
    for _ in 0..trials {
        let x: Vec<f64> = (0..m)
            .map(|_| rng.random_range(-half_width..=half_width))
            .collect();
        let counts = win_counts(w, &x, minimize);
        if counts.iter().all(|&c| c > 0) {
            all_won += 1;
        }
        for (t, c) in totals.iter_mut().zip(&counts) {
            *t += c;
        }
        match &first {
            None => first = Some(counts),
            Some(f) => {
                if f != &counts {
                    deterministic = false;
                }
            }
        }
    }
    InitAudit {
        trials,
        all_columns_won: all_won,
        first_counts: first.unwrap_or_default(),
        deterministic,
        total_counts: totals,
    }
}

/// Outcome of one deterministic property suite.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub semiring: String,
    pub mu: Option<f64>,
    pub cases: usize,
    pub failures: usize,
    pub max_residual: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn spec_label(spec: SemiringSpec) -> (String, Option<f64>) {
    let mu = (spec.kind == SemiringKind::LogPlus).then_some(spec.mu);
    (spec.name().to_string(), mu)
}

fn residual(lhs: f64, rhs: f64) -> f64 {
    if lhs == rhs {
        // covers identical infinities
        0.0
    } else {
        (lhs - rhs).abs() / f64::max(1.0, f64::max(lhs.abs(), rhs.abs()))
    }
}

/// Semiring axioms over random triples in [-50, 50]: associativity,
/// commutativity, distributivity, identities and annihilation.
///
/// For the tropical kinds every law except ⊙-associativity is bit-exact and
/// is checked as such; ⊙ is float addition, whose reassociation can move the
/// result by an ulp, so ⊙-associativity is held to 1e-12 like the smooth
/// semirings.
pub fn axiom_suite(spec: SemiringSpec, triples: usize, seed: u64) -> SuiteReport {
    let tropical = matches!(spec.kind, SemiringKind::MaxPlus | SemiringKind::MinPlus);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0usize;
    let mut max_res = 0.0f64;
    let tol = 1e-12;
    for _ in 0..triples {
        let a = rng.random_range(-50.0..50.0);
        let b = rng.random_range(-50.0..50.0);
        let c = rng.random_range(-50.0..50.0);
        let exact_laws = [
            (spec.add(spec.add(a, b), c), spec.add(a, spec.add(b, c))),
            (spec.add(a, b), spec.add(b, a)),
            (spec.mul(a, b), spec.mul(b, a)),
            (
                spec.mul(a, spec.add(b, c)),
                spec.add(spec.mul(a, b), spec.mul(a, c)),
            ),
            (spec.add(spec.zero(), a), a),
            (spec.mul(spec.one(), a), a),
            (spec.mul(spec.zero::<f64>(), a), spec.zero::<f64>()),
        ];
        let ulp_laws = [(spec.mul(spec.mul(a, b), c), spec.mul(a, spec.mul(b, c)))];
        for (lhs, rhs) in exact_laws {
            let r = residual(lhs, rhs);
            max_res = max_res.max(r);
            let ok = if tropical { lhs == rhs } else { r <= tol };
            if !ok {
                failures += 1;
            }
        }
        for (lhs, rhs) in ulp_laws {
            let r = residual(lhs, rhs);
            max_res = max_res.max(r);
            if r > tol {
                failures += 1;
            }
        }
    }
    let (semiring, mu) = spec_label(spec);
    SuiteReport { name: "semiring-axioms".into(), semiring, mu, cases: triples, failures, max_residual: max_res }
}

/// Quasilinearity of the matrix operator: `B ⊙ (a⊙x ⊕ b⊙y)` against
/// `a⊙(B⊙x) ⊕ b⊙(B⊙y)` on random instances.
///
/// Tropical instances are additionally drawn on a dyadic grid (multiples of
/// 1/8), where float addition is exact and both sides must agree bitwise;
/// continuous draws are held to 1e-12 (tropical) / 1e-10 (others).
pub fn quasilinearity_suite(spec: SemiringSpec, instances: usize, seed: u64) -> SuiteReport {
    let tropical = matches!(spec.kind, SemiringKind::MaxPlus | SemiringKind::MinPlus);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0usize;
    let mut max_res = 0.0f64;
    for case in 0..instances {
        let dyadic = tropical && case % 2 == 1;
        let draw = |rng: &mut ChaCha8Rng| -> f64 {
            if dyadic {
                (rng.random_range(-64i32..=64) as f64) / 8.0
            } else {
                rng.random_range(-3.0..3.0)
            }
        };
        let n = rng.random_range(1..=6);
        let m = rng.random_range(1..=6);
        let w_data: Vec<f64> = (0..n * m).map(|_| draw(&mut rng)).collect();
        let w = Tensor::new(vec![n, m], w_data).unwrap();
        let x: Vec<f64> = (0..m).map(|_| draw(&mut rng)).collect();
        let y: Vec<f64> = (0..m).map(|_| draw(&mut rng)).collect();
        let a = draw(&mut rng);
        let b = draw(&mut rng);

        let combined: Vec<f64> = (0..m)
            .map(|j| spec.add(spec.mul(a, x[j]), spec.mul(b, y[j])))
            .collect();
        let lhs =
            reference_matvec(spec, &w, &combined);
        let bx = reference_matvec(spec, &w, &x);
        let by = reference_matvec(spec, &w, &y);
        let rhs: Vec<f64> = (0..n)
            .map(|i| spec.add(spec.mul(a, bx[i]), spec.mul(b, by[i])))
            .collect();

        let tol = if tropical { 1e-12 } else { 1e-10 };
        for (l, r) in lhs.iter().zip(&rhs) {
            let res = residual(*l, *r);
            max_res = max_res.max(res);
            let ok = if dyadic { l == r } else { res <= tol };
            if !ok {
                failures += 1;
            }
        }
    }
    let (semiring, mu) = spec_label(spec);
    SuiteReport { name: "quasilinearity".into(), semiring, mu, cases: instances, failures, max_residual: max_res }
}

/// The batched kernel against the naive reference on random instances with
/// n, m ≤ 8: bitwise equality for linear/tropical, ≤ 1e-12 for log-plus.
pub fn oracle_suite(spec: SemiringSpec, instances: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0usize;
    let mut max_res = 0.0f64;
    for _ in 0..instances {
        let n = rng.random_range(1..=8);
        let m = rng.random_range(1..=8);
        let w_data: Vec<f64> = (0..n * m).map(|_| rng.random_range(-5.0..5.0)).collect();
        let x_data: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
        let w = Tensor::new(vec![n, m], w_data).unwrap();
        let x = Tensor::vector(x_data.clone());
        let got = linalg::semiring_matvec(spec, &w, &x).unwrap();
        let want = reference_matvec(spec, &w, &x_data);
        for (g, e) in got.data().iter().zip(&want) {
            let res = residual(*g, *e);
            max_res = max_res.max(res);
            let ok = match spec.kind {
                SemiringKind::LogPlus => res <= 1e-12,
                _ => g == e,
            };
            if !ok {
                failures += 1;
            }
        }
    }
    let (semiring, mu) = spec_label(spec);
    SuiteReport { name: "oracle-equivalence".into(), semiring, mu, cases: instances, failures, max_residual: max_res }
}

/// The full set of semirings the property suites run over.
pub fn all_specs() -> Vec<SemiringSpec> {
    vec![
        SemiringSpec::linear(),
        SemiringSpec::max_plus(),
        SemiringSpec::min_plus(),
        SemiringSpec::log_plus(1.0).unwrap(),
        SemiringSpec::log_plus(-1.0).unwrap(),
        SemiringSpec::log_plus(10.0).unwrap(),
        SemiringSpec::log_plus(-10.0).unwrap(),
    ]
}

/// Gradient check of one parameter tensor.
#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub worst_index: usize,
}

/// Full-model finite-difference gradient report.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub model: String,
    pub params: Vec<ParamCheck>,
    pub input_max_rel_err: f64,
    pub max_rel_err: f64,
    pub worst: String,
    /// Set when some tropical reduction had a winner margin below 1e-3;
    /// such instances are skipped by callers rather than failed.
    pub tie_proximal: bool,
    pub min_tie_gap: Option<f64>,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        !self.tie_proximal && self.max_rel_err <= tol
    }
}

/// Check every parameter gradient (and the input gradient) of a fully
/// connected model against central finite differences in double precision.
pub fn model_grad_check(config: &ModelConfig, batch: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = FcModel::<f64>::init(config.clone(), &mut rng)?;
    let x_data: Vec<f64> = (0..batch * config.n_features)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let labels: Vec<usize> = (0..batch)
        .map(|_| rng.random_range(0..config.n_classes))
        .collect();
    let input = Tensor::new(vec![batch, config.n_features], x_data.clone())?;

    // analytic pass
    let mut tape = Tape::new();
    let xv = tape.leaf("input", input.clone());
    let pass = model.forward(&mut tape, xv)?;
    let loss = tape.cross_entropy(pass.output, &labels)?;
    tape.backward(loss)?;
    let min_gap = tape.min_tropical_gap();
    let tie_proximal = min_gap.is_some_and(|g| g < 1e-3);

    let analytic_input = tape.grad(xv).expect("input gradient").to_vec();
    let analytic: Vec<Vec<f64>> = pass
        .param_vars
        .iter()
        .map(|&v| tape.grad(v).map(|g| g.to_vec()).unwrap_or_default())
        .collect();

    let h = 1e-6;
    let mut params = Vec::new();
    let mut max_err = 0.0f64;
    let mut worst = String::new();
    let mut worst_idx = 0usize;
    for pi in 0..model.params().len() {
        let base = model.params()[pi].value.data().to_vec();
        let name = model.params()[pi].name.clone();
        let fd = finite_diff_grad(
            |vals| {
                model.params_mut()[pi]
                    .value
                    .data_mut()
                    .copy_from_slice(vals);
                let mut t = Tape::new();
                let xv = t.leaf("input", input.clone());
                let p = model.forward(&mut t, xv).expect("forward");
                let l = t.cross_entropy(p.output, &labels).expect("loss");
                t.value(l).data()[0]
            },
            &base,
            h,
        );
        model.params_mut()[pi].value.data_mut().copy_from_slice(&base);
        let mut pmax = 0.0f64;
        let mut pidx = 0usize;
        for (k, (a, f)) in analytic[pi].iter().zip(&fd).enumerate() {
            let e = rel_err(*a, *f);
            if e > pmax {
                pmax = e;
                pidx = k;
            }
        }
        if pmax > max_err {
            max_err = pmax;
            worst = name.clone();
            worst_idx = pidx;
        }
        params.push(ParamCheck { name, max_rel_err: pmax, worst_index: pidx });
    }

    // input gradient against finite differences
    let fd_input = finite_diff_grad(
        |vals| {
            let mut t = Tape::new();
            let xv = t.leaf(
                "input",
                Tensor::new(vec![batch, config.n_features], vals.to_vec()).expect("shape"),
            );
            let p = model.forward(&mut t, xv).expect("forward");
            let l = t.cross_entropy(p.output, &labels).expect("loss");
            t.value(l).data()[0]
        },
        &x_data,
        h,
    );
    let mut input_max = 0.0f64;
    for (a, f) in analytic_input.iter().zip(&fd_input) {
        input_max = input_max.max(rel_err(*a, *f));
    }
    if input_max > max_err {
        max_err = input_max;
        worst = "input".into();
        worst_idx = 0;
    }

    Ok(GradCheckReport {
        model: config.describe(),
        params,
        input_max_rel_err: input_max,
        max_rel_err: max_err,
        worst: format!("{worst}[{worst_idx}]"),
        tie_proximal,
        min_tie_gap: min_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_diff_on_square_and_max() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[3.0], 1e-6);
        assert!((g[0] - 6.0).abs() < 1e-6);

        let g = finite_diff_grad(|x| f64::max(x[0], x[1]), &[1.0, 0.0], 1e-6);
        assert!((g[0] - 1.0).abs() < 1e-9);
        assert!(g[1].abs() < 1e-9);
    }

    #[test]
    fn finite_diff_of_log_reduce_is_softmax() {
        let spec = SemiringSpec::log_plus(2.5).unwrap();
        let x0 = [0.3, -0.8, 1.1];
        let g = finite_diff_grad(|x| spec.add_reduce(x).unwrap(), &x0, 1e-6);
        let z: Vec<f64> = x0.iter().map(|&v| (2.5 * v).exp()).collect();
        let s: f64 = z.iter().sum();
        for (gi, zi) in g.iter().zip(&z) {
            assert!(rel_err(*gi, zi / s) < 1e-6);
        }
    }

    #[test]
    fn reference_matvec_basics() {
        let spec = SemiringSpec::max_plus();
        // identity matrix
        let neg = f64::NEG_INFINITY;
        let w = Tensor::matrix(&[vec![0.0, neg], vec![neg, 0.0]]).unwrap();
        assert_eq!(reference_matvec(spec, &w, &[1.25, -0.5]), vec![1.25, -0.5]);
        // 1x1 tropical case reduces to w + x
        let w = Tensor::new(vec![1, 1], vec![0.75]).unwrap();
        assert_eq!(reference_matvec(spec, &w, &[0.5]), vec![1.25]);
    }

    #[test]
    fn tie_distance_examples() {
        let spec = SemiringSpec::max_plus();
        let w = Tensor::new(vec![1, 2], vec![0.0, -1.0]).unwrap();
        let x = Tensor::vector(vec![0.0, 0.0]);
        assert_eq!(tie_distance(spec, &w, &x), 1.0);
        let w = Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap();
        assert_eq!(tie_distance(spec, &w, &x), 0.0);
        // random instances have positive gaps with probability one
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let w_data: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let x_data: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let w = Tensor::new(vec![2, 3], w_data).unwrap();
            let x = Tensor::vector(x_data);
            assert!(tie_distance(spec, &w, &x) > 0.0);
        }
    }

    #[test]
    fn all_equal_matrix_gives_all_wins_to_lowest_column() {
        let w = Tensor::<f64>::zeros(vec![4, 3]);
        let counts = win_counts(&w, &[0.0, 0.0, 0.0], false);
        assert_eq!(counts, vec![4, 0, 0]);
    }

    #[test]
    fn suites_pass_for_every_semiring() {
        for spec in all_specs() {
            let ax = axiom_suite(spec, 200, 11);
            assert!(ax.passed(), "{ax:?}");
            let q = quasilinearity_suite(spec, 50, 12);
            assert!(q.passed(), "{q:?}");
            let o = oracle_suite(spec, 30, 13);
            assert!(o.passed(), "{o:?}");
        }
    }
}
