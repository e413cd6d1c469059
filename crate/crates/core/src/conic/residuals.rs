use super::{dot, norm, svec_len, ConicProblem, Residuals, Sense};
use crate::conic::smat;

/// Relative KKT residuals of `(x, y, s)` for `problem`, computed from the
/// original data only.
///
/// * primal: `‖A x ± s − b‖` together with the cone violation of `x` and
///   `s`, over `1 + ‖b‖`;
/// * dual: distance of `c − Aᵀy` from the cone plus sign violations of `y`
///   (`≤` rows need `y ≤ 0`, `≥` rows `y ≥ 0`), over `1 + ‖c‖`;
/// * gap: `|cᵀx − bᵀy| / (1 + |cᵀx| + |bᵀy|)`.
pub fn kkt_residuals(problem: &ConicProblem, x: &[f64], y: &[f64], s: &[f64]) -> Residuals {
    let m = problem.row_count();
    let mut r = problem.row_activity(x);
    let mut slack_violation = 0.0;
    for (i, row) in problem.rows.iter().enumerate() {
        let si = s.get(i).copied().unwrap_or(0.0);
        match row.sense {
            Sense::Le => r[i] += si,
            Sense::Ge => r[i] -= si,
            Sense::Eq => {}
        }
        if row.sense != Sense::Eq {
            slack_violation += si.min(0.0).powi(2);
        }
        r[i] -= row.rhs;
    }
    let b: Vec<f64> = problem.rows.iter().map(|r| r.rhs).collect();
    let primal_violation = cone_violation_sq(problem, x) + slack_violation;
    let primal = (norm(&r).powi(2) + primal_violation).sqrt() / (1.0 + norm(&b));

    let aty = problem.transpose_mul(&y[..m]);
    let z: Vec<f64> = problem.objective.iter().zip(&aty).map(|(c, a)| c - a).collect();
    let mut sign_violation = 0.0;
    for (row, &yi) in problem.rows.iter().zip(y) {
        sign_violation += match row.sense {
            Sense::Le => yi.max(0.0).powi(2),
            Sense::Ge => yi.min(0.0).powi(2),
            Sense::Eq => 0.0,
        };
    }
    let dual = (cone_violation_sq(problem, &z) + sign_violation).sqrt() / (1.0 + norm(&problem.objective));

    let pobj = dot(&problem.objective, x);
    let dobj = dot(&b, y);
    let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
    Residuals { primal, dual, gap }
}

/// Squared distance of `v` from the cone of `problem`.
pub(crate) fn cone_violation_sq(problem: &ConicProblem, v: &[f64]) -> f64 {
    let mut total: f64 = v[..problem.cones.nonnegative].iter().map(|x| x.min(0.0).powi(2)).sum();
    let mut off = problem.cones.nonnegative;
    for &n in &problem.cones.psd {
        let len = svec_len(n);
        let eig = smat(&v[off..off + len], n).symmetric_eigenvalues();
        total += eig.iter().map(|e| e.min(0.0).powi(2)).sum::<f64>();
        off += len;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{svec, ConicBuilder};
    use nalgebra::DMatrix;

    #[test]
    fn zero_residuals_at_known_optimum() {
        // min x0 + tr(X)  s.t.  x0 + X00 >= 1,  X11 = 1  (X 2x2 PSD)
        let mut b = ConicBuilder::new();
        let x0 = b.nonneg();
        let blk = b.psd_block(2);
        let r0 = b.row(Sense::Ge, 1.0);
        b.coef_lp(r0, x0, 1.0);
        b.coef_psd(r0, blk, 0, 0, 1.0);
        let r1 = b.row(Sense::Eq, 1.0);
        b.coef_psd(r1, blk, 1, 1, 1.0);
        b.objective_lp(x0, 1.0);
        b.objective_psd(blk, 0, 0, 1.0);
        b.objective_psd(blk, 1, 1, 1.0);
        let p = b.build();
        // optimum 2: X = diag(t, 1), x0 = 1 - t; y = (1, 1)
        let mut x = vec![0.5];
        x.extend(svec(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 1.0]))));
        let res = kkt_residuals(&p, &x, &[1.0, 1.0], &[0.0, 0.0]);
        assert!(res.max() < 1e-15, "{res:?}");
        // a wrong sign on the >= multiplier is a dual violation
        let bad = kkt_residuals(&p, &x, &[-1.0, 1.0], &[0.0, 0.0]);
        assert!(bad.dual > 0.1);
        // an indefinite X is a primal violation
        let mut xi = vec![0.5];
        xi.extend(svec(&DMatrix::from_row_slice(2, 2, &[0.5, 2.0, 2.0, 1.0])));
        assert!(kkt_residuals(&p, &xi, &[1.0, 1.0], &[0.0, 0.0]).primal > 0.1);
    }
}
