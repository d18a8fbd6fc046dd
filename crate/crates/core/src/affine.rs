//! Affine constraint sets `{y : h^T y = z}`, their exact projectors, and the
//! classification of `z = H y` into the unique / infinite / least-squares cases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{self, dot, norm, Matrix, DEFAULT_RANK_TOL};

/// Rows with norm below this are treated as zero.
pub const ZERO_ROW_TOL: f64 = 1e-12;

/// A single hyperplane `{y : h^T y = z}` with unit normal `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    normal: Vec<f64>,
    offset: f64,
}

impl Hyperplane {
    /// `normal` must already have unit length.
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let n = norm(&normal);
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::PreconditionViolated(format!(
                "hyperplane normal must have unit norm, got {n}"
            )));
        }
        Ok(Self { normal, offset })
    }

    /// Rescales `(h, z)` by `1/‖h‖`; the solution set is unchanged.
    pub fn from_raw(h: &[f64], z: f64) -> Result<Self> {
        let n = norm(h);
        if n < ZERO_ROW_TOL {
            return Err(Error::ZeroRow { row: 0 });
        }
        Ok(Self {
            normal: h.iter().map(|v| v / n).collect(),
            offset: z / n,
        })
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// `(I − h h^T) y + z h`
    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        let r = dot(&self.normal, y) - self.offset;
        y.iter().zip(&self.normal).map(|(yi, hi)| yi - r * hi).collect()
    }

    /// Projection onto the direction space `{y : h^T y = 0}`.
    pub fn project_direction(&self, y: &[f64]) -> Vec<f64> {
        let r = dot(&self.normal, y);
        y.iter().zip(&self.normal).map(|(yi, hi)| yi - r * hi).collect()
    }

    pub fn residual(&self, y: &[f64]) -> f64 {
        dot(&self.normal, y) - self.offset
    }

    pub fn distance(&self, y: &[f64]) -> f64 {
        self.residual(y).abs()
    }
}

/// The constraint set of one node: all rows it holds, `{y : h_k^T y = z_k}`.
///
/// The raw rows are kept verbatim (the unnormalized flow needs them). For
/// projection the rows are orthonormalized once at construction into
/// `{y : Q y = d}`; dependent rows are dropped after checking they agree with
/// the rows already kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePatch {
    raw_rows: Vec<(Vec<f64>, f64)>,
    basis: Vec<Vec<f64>>,
    offsets: Vec<f64>,
}

impl AffinePatch {
    pub fn new(raw_rows: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let m = match raw_rows.first() {
            Some((h, _)) => h.len(),
            None => {
                return Err(Error::PreconditionViolated(
                    "an affine patch needs at least one row".into(),
                ))
            }
        };
        let scale = raw_rows
            .iter()
            .map(|(h, _)| norm(h))
            .fold(0.0, f64::max);
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut offsets: Vec<f64> = Vec::new();
        for (idx, (h, z)) in raw_rows.iter().enumerate() {
            if h.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "patch row {idx} has dimension {}, expected {m}",
                    h.len()
                )));
            }
            let hn = norm(h);
            if hn < ZERO_ROW_TOL {
                return Err(Error::ZeroRow { row: idx });
            }
            // Modified Gram-Schmidt on the augmented row (h | z).
            let mut v = h.clone();
            let mut c = *z;
            for (q, d) in basis.iter().zip(&offsets) {
                let coef = dot(q, &v);
                numkit::axpy(-coef, q, &mut v);
                c -= coef * d;
            }
            let vn = norm(&v);
            if vn <= DEFAULT_RANK_TOL * scale {
                let tol = DEFAULT_RANK_TOL * (1.0 + z.abs()) * (1.0 + scale);
                if c.abs() > tol {
                    return Err(Error::InconsistentPatch {
                        row: idx,
                        residual: c.abs(),
                    });
                }
                continue;
            }
            basis.push(v.iter().map(|x| x / vn).collect());
            offsets.push(c / vn);
        }
        Ok(Self {
            raw_rows,
            basis,
            offsets,
        })
    }

    pub fn from_hyperplane(plane: &Hyperplane) -> Self {
        Self {
            raw_rows: vec![(plane.normal.clone(), plane.offset)],
            basis: vec![plane.normal.clone()],
            offsets: vec![plane.offset],
        }
    }

    pub fn raw_rows(&self) -> &[(Vec<f64>, f64)] {
        &self.raw_rows
    }

    pub fn dim(&self) -> usize {
        self.raw_rows[0].0.len()
    }

    /// Number of independent constraints.
    pub fn codim(&self) -> usize {
        self.basis.len()
    }

    /// Orthonormal rows `Q` spanning the constraint normals.
    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// Right-hand side `d` of the orthonormalized system `Q y = d`.
    pub fn basis_offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// `y − Q^T (Q y − d)`
    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        let mut out = y.to_vec();
        for (q, d) in self.basis.iter().zip(&self.offsets) {
            let r = dot(q, y) - d;
            numkit::axpy(-r, q, &mut out);
        }
        out
    }

    /// Projection onto the direction space `{y : Q y = 0}`.
    pub fn project_direction(&self, y: &[f64]) -> Vec<f64> {
        let mut out = y.to_vec();
        for q in &self.basis {
            let r = dot(q, y);
            numkit::axpy(-r, q, &mut out);
        }
        out
    }

    pub fn distance(&self, y: &[f64]) -> f64 {
        numkit::dist(y, &self.project(y))
    }

    /// Largest absolute residual over the raw rows, each normalized to unit norm.
    pub fn max_residual(&self, y: &[f64]) -> f64 {
        self.raw_rows
            .iter()
            .map(|(h, z)| ((dot(h, y) - z) / norm(h)).abs())
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        self.max_residual(y) <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseLabel {
    /// rank(H) = m and z ∈ span(H)
    ExactUnique,
    /// rank(H) < m and z ∈ span(H)
    ExactInfinite,
    /// z ∉ span(H)
    LeastSquares,
}

impl CaseLabel {
    pub fn is_exact(self) -> bool {
        !matches!(self, CaseLabel::LeastSquares)
    }
}

/// `z = H y` with per-row bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    h: Matrix,
    z: Vec<f64>,
    normalized: bool,
    case_label: CaseLabel,
}

impl LinearSystem {
    /// Keeps rows as given (used by the unnormalized flow).
    pub fn new_raw(h: Matrix, z: Vec<f64>) -> Result<Self> {
        check_rows(&h, &z)?;
        let case_label = classify_parts(&h, &z);
        Ok(Self {
            h,
            z,
            normalized: false,
            case_label,
        })
    }

    pub fn h(&self) -> &Matrix {
        &self.h
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn case_label(&self) -> CaseLabel {
        self.case_label
    }

    /// Number of rows N.
    pub fn rows(&self) -> usize {
        self.h.rows()
    }

    /// Unknown dimension m.
    pub fn dim(&self) -> usize {
        self.h.cols()
    }

    pub fn row(&self, i: usize) -> (&[f64], f64) {
        (self.h.row(i), self.z[i])
    }

    /// Hyperplane of row `i`, normalized if the system is not.
    pub fn plane(&self, i: usize) -> Hyperplane {
        let (h, z) = self.row(i);
        if self.normalized {
            Hyperplane {
                normal: h.to_vec(),
                offset: z,
            }
        } else {
            Hyperplane::from_raw(h, z).expect("rows are nonzero by construction")
        }
    }

    pub fn planes(&self) -> Vec<Hyperplane> {
        (0..self.rows()).map(|i| self.plane(i)).collect()
    }

    /// One single-row patch per row.
    pub fn row_patches(&self) -> Vec<AffinePatch> {
        (0..self.rows())
            .map(|i| {
                let (h, z) = self.row(i);
                AffinePatch::new(vec![(h.to_vec(), z)]).expect("single nonzero row is consistent")
            })
            .collect()
    }

    /// Patches from row groups; indices may overlap between groups.
    pub fn grouped_patches(&self, groups: &[Vec<usize>]) -> Result<Vec<AffinePatch>> {
        groups
            .iter()
            .enumerate()
            .map(|(node, rows)| {
                if rows.is_empty() {
                    return Err(Error::PreconditionViolated(format!(
                        "node {node} holds no rows"
                    )));
                }
                let raw = rows
                    .iter()
                    .map(|&r| {
                        if r >= self.rows() {
                            Err(Error::DimensionMismatch(format!(
                                "node {node} references row {r}, system has {} rows",
                                self.rows()
                            )))
                        } else {
                            let (h, z) = self.row(r);
                            Ok((h.to_vec(), z))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                AffinePatch::new(raw)
            })
            .collect()
    }

    /// The intersection of all rows as one patch; `None` in the least-squares case.
    pub fn intersection_patch(&self) -> Option<AffinePatch> {
        if !self.case_label.is_exact() {
            return None;
        }
        let rows = (0..self.rows())
            .map(|i| {
                let (h, z) = self.row(i);
                (h.to_vec(), z)
            })
            .collect();
        AffinePatch::new(rows).ok()
    }

    /// Least-squares solution `(H^T H)^{-1} H^T z`.
    pub fn least_squares_solution(&self) -> Result<Vec<f64>> {
        numkit::least_squares(&self.h, &self.z)
    }

    /// Least-norm exact solution, i.e. the projection of the origin onto the solution set.
    pub fn particular_solution(&self) -> Result<Vec<f64>> {
        project_intersection(&vec![0.0; self.dim()], self)
    }
}

fn check_rows(h: &Matrix, z: &[f64]) -> Result<()> {
    if h.rows() == 0 || h.cols() == 0 {
        return Err(Error::DimensionMismatch("H must be nonempty".into()));
    }
    if z.len() != h.rows() {
        return Err(Error::DimensionMismatch(format!(
            "z has {} entries, H has {} rows",
            z.len(),
            h.rows()
        )));
    }
    if !numkit::all_finite(z) {
        return Err(Error::NonFinite("z".into()));
    }
    for i in 0..h.rows() {
        if norm(h.row(i)) < ZERO_ROW_TOL {
            return Err(Error::ZeroRow { row: i });
        }
    }
    Ok(())
}

/// Divides every row and its `z_i` by `‖h_i‖`.
pub fn normalize_system(h_raw: &Matrix, z_raw: &[f64]) -> Result<LinearSystem> {
    check_rows(h_raw, z_raw)?;
    let mut rows = Vec::with_capacity(h_raw.rows());
    let mut z = Vec::with_capacity(h_raw.rows());
    for i in 0..h_raw.rows() {
        let plane = Hyperplane::from_raw(h_raw.row(i), z_raw[i])
            .map_err(|_| Error::ZeroRow { row: i })?;
        rows.push(plane.normal);
        z.push(plane.offset);
    }
    let h = Matrix::from_rows(&rows)?;
    let case_label = classify_parts(&h, &z);
    Ok(LinearSystem {
        h,
        z,
        normalized: true,
        case_label,
    })
}

pub fn project_hyperplane(y: &[f64], plane: &Hyperplane) -> Vec<f64> {
    plane.project(y)
}

pub fn project_patch(y: &[f64], patch: &AffinePatch) -> Vec<f64> {
    patch.project(y)
}

/// Nearest point of `∩_i A_i`.
pub fn project_intersection(y: &[f64], sys: &LinearSystem) -> Result<Vec<f64>> {
    if y.len() != sys.dim() {
        return Err(Error::DimensionMismatch(format!(
            "point has dimension {}, system has {}",
            y.len(),
            sys.dim()
        )));
    }
    let patch = sys.intersection_patch().ok_or(Error::EmptyIntersection)?;
    Ok(patch.project(y))
}

pub fn classify(sys: &LinearSystem) -> CaseLabel {
    classify_parts(sys.h(), sys.z())
}

fn classify_parts(h: &Matrix, z: &[f64]) -> CaseLabel {
    // Rows are rescaled to unit norm first so the relative tolerance sees
    // every row on the same footing.
    let mut rows = Vec::with_capacity(h.rows());
    let mut zn = Vec::with_capacity(h.rows());
    for i in 0..h.rows() {
        let n = norm(h.row(i));
        rows.push(h.row(i).iter().map(|v| v / n).collect::<Vec<_>>());
        zn.push(z[i] / n);
    }
    let hn = Matrix::from_rows(&rows).expect("rows share a length");
    let r = numkit::rank(&hn, DEFAULT_RANK_TOL);
    let z_scale = numkit::norm_inf(&zn).max(1.0);
    let aug: Vec<f64> = zn.iter().map(|v| v / z_scale).collect();
    let r_aug = numkit::rank(&hn.augment(&aug), DEFAULT_RANK_TOL);
    if r_aug > r {
        CaseLabel::LeastSquares
    } else if r == h.cols() {
        CaseLabel::ExactUnique
    } else {
        CaseLabel::ExactInfinite
    }
}

/// Outcome of the symmetry test `Σ_i P_i(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryCheck {
    pub holds: bool,
    /// `Σ_i z_i h_i`
    pub defect: Vec<f64>,
}

/// Checks that the projections of the origin onto all planes sum to zero.
pub fn check_a2(planes: &[Hyperplane]) -> SymmetryCheck {
    let m = planes.first().map_or(0, Hyperplane::dim);
    let mut defect = vec![0.0; m];
    for p in planes {
        numkit::axpy(p.offset, &p.normal, &mut defect);
    }
    SymmetryCheck {
        holds: norm(&defect) <= 1e-10,
        defect,
    }
}

/// Heuristic probe of whether products of projections stay bounded.
///
/// Runs `trials` random projection sequences of length `max_len` starting at
/// `y0` and returns the largest norm seen. This cannot prove boundedness; it
/// only flags obvious growth.
pub fn sample_a1(planes: &[Hyperplane], y0: &[f64], max_len: usize, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = norm(y0);
    if planes.is_empty() {
        return worst;
    }
    for _ in 0..trials.max(1) {
        let mut y = y0.to_vec();
        for _ in 0..max_len.max(1) {
            let k = rng.gen_range(0..planes.len());
            y = planes[k].project(&y);
            worst = worst.max(norm(&y));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::numkit::dist;

    const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn normalize_examples() {
        let sys = normalize_system(&Matrix::from_rows(&[[0.0, 2.0]]).unwrap(), &[2.0]).unwrap();
        assert_eq!(sys.row(0), (&[0.0, 1.0][..], 1.0));

        let ex1 = fixtures::example1_system();
        let again = normalize_system(ex1.h(), ex1.z()).unwrap();
        assert!(again.h().minus(ex1.h()).max_abs() < 1e-15);

        let sys = normalize_system(&Matrix::from_rows(&[[3.0, 4.0]]).unwrap(), &[5.0]).unwrap();
        let (h, z) = sys.row(0);
        assert!(dist(h, &[0.6, 0.8]) < 1e-15 && (z - 1.0).abs() < 1e-15);
        // Same solution set: points on 3a + 4b = 5 satisfy the scaled row and vice versa.
        for a in [-2.0, 0.0, 1.5, 7.0] {
            let p = [a, (5.0 - 3.0 * a) / 4.0];
            assert!((dot(h, &p) - z).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_rejects_zero_row() {
        let h = Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        assert_eq!(normalize_system(&h, &[1.0, 0.0]), Err(Error::ZeroRow { row: 1 }));
    }

    #[test]
    fn hyperplane_projection_examples() {
        let p = Hyperplane::new(vec![0.0, 1.0], 1.0).unwrap();
        assert_eq!(p.project(&[4.0, -3.0]), vec![4.0, 1.0]);
        let p = Hyperplane::new(vec![-S, S], S).unwrap();
        assert!(dist(&p.project(&[0.0, 0.0]), &[-0.5, 0.5]) < 1e-15);
        for plane in fixtures::example1_system().planes() {
            assert!(dist(&plane.project(&[0.0, 1.0]), &[0.0, 1.0]) < 1e-15);
        }
    }

    #[test]
    fn patch_projection_examples() {
        let plane = Hyperplane::new(vec![S, S], -S).unwrap();
        let patch = AffinePatch::from_hyperplane(&plane);
        let y = [0.3, -1.7];
        assert!(dist(&patch.project(&y), &plane.project(&y)) < 1e-15);

        let patch = AffinePatch::new(vec![(vec![-S, S], S), (vec![0.0, 1.0], 1.0)]).unwrap();
        let p = patch.project(&[5.0, 5.0]);
        assert!(dist(&p, &[0.0, 1.0]) < 1e-14);
        assert!((dot(&[-S, S], &p) - S).abs() < 1e-14);
        assert!((p[1] - 1.0).abs() < 1e-14);

        assert!(dist(&patch.project(&[0.0, 1.0]), &[0.0, 1.0]) < 1e-15);
    }

    #[test]
    fn patch_drops_dependent_rows_and_rejects_inconsistent() {
        let patch =
            AffinePatch::new(vec![(vec![1.0, 1.0], 1.0), (vec![2.0, 2.0], 2.0)]).unwrap();
        assert_eq!(patch.codim(), 1);
        let err = AffinePatch::new(vec![(vec![1.0, 1.0], 1.0), (vec![2.0, 2.0], 3.0)]);
        assert!(matches!(err, Err(Error::InconsistentPatch { row: 1, .. })));
    }

    #[test]
    fn intersection_examples() {
        let ex2 = fixtures::example2_system();
        let p = project_intersection(&[1.0, 2.0, 3.0], &ex2).unwrap();
        assert!(dist(&p, &[0.0, 1.0, 3.0]) < 1e-14);
        // Least-norm oracle: correction must lie in the row space, i.e. have no third component.
        assert!(sub_third(&[1.0, 2.0, 3.0], &p).abs() < 1e-14);

        let ex1 = fixtures::example1_system();
        for y in [[3.0, -2.0], [0.0, 0.0], [100.0, 7.0]] {
            assert!(dist(&project_intersection(&y, &ex1).unwrap(), &[0.0, 1.0]) < 1e-13);
        }
        let inside = [0.0, 1.0, -4.0];
        assert!(dist(&project_intersection(&inside, &ex2).unwrap(), &inside) < 1e-14);

        let ex3 = fixtures::example3_system();
        assert_eq!(project_intersection(&[0.0, 0.0], &ex3), Err(Error::EmptyIntersection));
    }

    fn sub_third(a: &[f64], b: &[f64]) -> f64 {
        a[2] - b[2]
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(&fixtures::example1_system()), CaseLabel::ExactUnique);
        assert_eq!(classify(&fixtures::example2_system()), CaseLabel::ExactInfinite);
        assert_eq!(classify(&fixtures::example3_system()), CaseLabel::LeastSquares);
        assert_eq!(fixtures::example3_system().case_label(), CaseLabel::LeastSquares);
    }

    #[test]
    fn a2_examples() {
        let check = check_a2(&fixtures::example3_system().planes());
        // Oracle: Σ z_i h_i summed by hand to (0, 0).
        let manual = [(-0.5, 0.5), (0.5, 0.5), (0.5, -0.5), (-0.5, -0.5)]
            .iter()
            .fold((0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1));
        assert_eq!(manual, (0.0, 0.0));
        assert!(check.holds);
        assert!(norm(&check.defect) < 1e-15);

        let lone = Hyperplane::new(vec![1.0, 0.0], 2.0).unwrap();
        assert!(!check_a2(&[lone]).holds);

        let through_origin = vec![
            Hyperplane::new(vec![1.0, 0.0], 0.0).unwrap(),
            Hyperplane::new(vec![S, S], 0.0).unwrap(),
        ];
        assert!(check_a2(&through_origin).holds);
    }

    #[test]
    fn a1_probe() {
        let plane = Hyperplane::new(vec![0.0, 1.0], 2.0).unwrap();
        let y0 = [3.0, -4.0];
        let once = norm(&plane.project(&y0));
        let probe = sample_a1(&[plane.clone(), plane.clone(), plane], &y0, 20, 5, 1);
        assert_eq!(probe, once.max(norm(&y0)));

        let planes = fixtures::example1_system().planes();
        let short = sample_a1(&planes, &[10.0, -10.0], 10, 20, 9);
        let long = sample_a1(&planes, &[10.0, -10.0], 1000, 20, 9);
        assert!(long <= short + 1e-12, "{short} vs {long}");
        assert!(long <= norm(&[10.0, -10.0]) + 2.0);

        // Parallel planes y2 = 1 and y2 = -1: iterates alternate between two points.
        let par = vec![
            Hyperplane::new(vec![0.0, 1.0], 1.0).unwrap(),
            Hyperplane::new(vec![0.0, 1.0], -1.0).unwrap(),
        ];
        let probe = sample_a1(&par, &[2.0, 0.0], 500, 10, 4);
        assert!((probe - 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(probe, sample_a1(&par, &[2.0, 0.0], 500, 10, 4));
    }
}
