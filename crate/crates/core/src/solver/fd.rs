//! Central-difference validation of analytic derivatives.

use super::NlpProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckedComponent {
    Objective,
    EqJacobian,
    IneqJacobian,
}

/// Worst relative mismatch between analytic and central-difference
/// derivatives, with the offending entry.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub component: CheckedComponent,
    pub row: usize,
    pub col: usize,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0f64.max(a.abs()).max(b.abs())
}

/// Checks the objective gradient and both residual Jacobians at `x` by
/// central differences with step `h`. The point should be interior to the
/// variable bounds by at least `h`.
pub fn check_gradients(p: &dyn NlpProblem, x: &[f64], h: f64) -> GradCheckReport {
    let n = p.n_vars();
    let eq_pat = p.eq_pattern();
    let ineq_pat = p.ineq_pattern();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        component: CheckedComponent::Objective,
        row: 0,
        col: 0,
    };
    let update = |err: f64, component: CheckedComponent, row: usize, col: usize, rep: &mut GradCheckReport| {
        if err > rep.max_rel_err {
            rep.max_rel_err = err;
            rep.component = component;
            rep.row = row;
            rep.col = col;
        }
    };

    let mut grad = vec![0.0; n];
    p.objective(x, Some(&mut grad));
    let mut je_vals = Vec::new();
    let mut jh_vals = Vec::new();
    let mut ce = vec![0.0; eq_pat.rows];
    let mut hi = vec![0.0; ineq_pat.rows];
    p.eval_eq(x, &mut ce, Some(&mut je_vals));
    p.eval_ineq(x, &mut hi, Some(&mut jh_vals));

    // Analytic entries grouped by column for direct comparison.
    let mut eq_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (k, &(r, c)) in eq_pat.entries.iter().enumerate() {
        eq_cols[c].push((r, je_vals[k]));
    }
    let mut ineq_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (k, &(r, c)) in ineq_pat.entries.iter().enumerate() {
        ineq_cols[c].push((r, jh_vals[k]));
    }

    let mut xp = x.to_vec();
    let mut cep = vec![0.0; eq_pat.rows];
    let mut cem = vec![0.0; eq_pat.rows];
    let mut hip = vec![0.0; ineq_pat.rows];
    let mut him = vec![0.0; ineq_pat.rows];
    let mut fd_eq = vec![0.0; eq_pat.rows];
    let mut fd_ineq = vec![0.0; ineq_pat.rows];

    for j in 0..n {
        let orig = xp[j];
        xp[j] = orig + h;
        let fp = p.objective(&xp, None);
        p.eval_eq(&xp, &mut cep, None);
        p.eval_ineq(&xp, &mut hip, None);
        xp[j] = orig - h;
        let fm = p.objective(&xp, None);
        p.eval_eq(&xp, &mut cem, None);
        p.eval_ineq(&xp, &mut him, None);
        xp[j] = orig;

        update(rel((fp - fm) / (2.0 * h), grad[j]), CheckedComponent::Objective, 0, j, &mut report);

        for r in 0..eq_pat.rows {
            fd_eq[r] = (cep[r] - cem[r]) / (2.0 * h);
        }
        for r in 0..ineq_pat.rows {
            fd_ineq[r] = (hip[r] - him[r]) / (2.0 * h);
        }
        // Entries present in the pattern must match their value; entries
        // absent from the pattern must differentiate to (numerically) zero.
        let mut seen_eq = vec![false; eq_pat.rows];
        for &(r, v) in &eq_cols[j] {
            update(rel(fd_eq[r], v), CheckedComponent::EqJacobian, r, j, &mut report);
            seen_eq[r] = true;
        }
        for (r, &fd) in fd_eq.iter().enumerate() {
            if !seen_eq[r] && fd.abs() > 0.0 {
                update(rel(fd, 0.0), CheckedComponent::EqJacobian, r, j, &mut report);
            }
        }
        let mut seen_in = vec![false; ineq_pat.rows];
        for &(r, v) in &ineq_cols[j] {
            update(rel(fd_ineq[r], v), CheckedComponent::IneqJacobian, r, j, &mut report);
            seen_in[r] = true;
        }
        for (r, &fd) in fd_ineq.iter().enumerate() {
            if !seen_in[r] && fd.abs() > 0.0 {
                update(rel(fd, 0.0), CheckedComponent::IneqJacobian, r, j, &mut report);
            }
        }
    }
    report
}
