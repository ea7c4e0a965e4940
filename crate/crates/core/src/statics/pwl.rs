//! Disjunctive piecewise-linear systems: every clause must hold through one of its pieces.

/// Tolerance for inequality checks and for rank decisions.
pub(crate) const TOL: f64 = 1e-10;

/// `coef . x + konst`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Affine {
    pub coef: Vec<f64>,
    pub konst: f64,
}

impl Affine {
    pub fn constant(n: usize, k: f64) -> Self {
        Self { coef: vec![0.0; n], konst: k }
    }

    pub fn var(n: usize, i: usize) -> Self {
        let mut a = Self::constant(n, 0.0);
        a.coef[i] = 1.0;
        a
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { coef: self.coef.iter().map(|c| c * s).collect(), konst: self.konst * s }
    }

    pub fn add(&self, o: &Affine) -> Self {
        Self { coef: self.coef.iter().zip(&o.coef).map(|(a, b)| a + b).collect(), konst: self.konst + o.konst }
    }

    pub fn sub(&self, o: &Affine) -> Self {
        self.add(&o.scale(-1.0))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coef.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.konst
    }
}

/// One branch of a clause: equalities `= 0` and inequalities `<= 0`.
#[derive(Debug, Clone, Default)]
pub(crate) struct Piece {
    pub eqs: Vec<Affine>,
    pub les: Vec<Affine>,
}

pub(crate) type Clause = Vec<Piece>;

/// A piecewise-linear expression: alternatives `(value, constraints <= 0)`.
pub(crate) type PExpr = Vec<(Affine, Vec<Affine>)>;

pub(crate) fn leaf(a: Affine) -> PExpr {
    vec![(a, Vec::new())]
}

fn extremum(children: &[PExpr], is_min: bool) -> PExpr {
    let mut combos: Vec<Vec<&(Affine, Vec<Affine>)>> = vec![Vec::new()];
    for ch in children {
        combos = combos.into_iter().flat_map(|c| ch.iter().map(move |alt| [c.clone(), vec![alt]].concat())).collect();
    }
    let mut out = Vec::new();
    for combo in combos {
        let base: Vec<Affine> = combo.iter().flat_map(|(_, cons)| cons.iter().cloned()).collect();
        for (i, (vi, _)) in combo.iter().enumerate() {
            let mut cons = base.clone();
            for (k, (vk, _)) in combo.iter().enumerate() {
                if k != i {
                    cons.push(if is_min { vi.sub(vk) } else { vk.sub(vi) });
                }
            }
            out.push((vi.clone(), cons));
        }
    }
    out
}

pub(crate) fn pmin(children: &[PExpr]) -> PExpr {
    extremum(children, true)
}

pub(crate) fn pmax(children: &[PExpr]) -> PExpr {
    extremum(children, false)
}

/// Clause `lhs = expr`.
pub(crate) fn equation(lhs: &Affine, expr: PExpr) -> Clause {
    expr.into_iter().map(|(v, les)| Piece { eqs: vec![lhs.sub(&v)], les }).collect()
}

/// Reduced row echelon system built one equation at a time.
#[derive(Debug, Clone)]
struct Echelon {
    n: usize,
    /// Rows `(pivot column, row)` with unit pivot and zeros in other pivot columns.
    rows: Vec<(usize, Affine)>,
}

impl Echelon {
    fn new(n: usize) -> Self {
        Self { n, rows: Vec::new() }
    }

    /// Add `e = 0`; false when inconsistent.
    fn add(&mut self, e: &Affine) -> bool {
        let mut r = e.clone();
        for (p, row) in &self.rows {
            let c = r.coef[*p];
            if c != 0.0 {
                r = r.sub(&row.scale(c));
            }
        }
        let scale = 1.0 + r.coef.iter().fold(r.konst.abs(), |m, c| m.max(c.abs()));
        let (p, pv) = r.coef.iter().enumerate().fold((0, 0.0f64), |b, (i, c)| if c.abs() > b.1.abs() { (i, *c) } else { b });
        if pv.abs() <= 1e-12 * scale {
            return r.konst.abs() <= TOL * scale;
        }
        let r = r.scale(1.0 / pv);
        for (_, row) in self.rows.iter_mut() {
            let c = row.coef[p];
            if c != 0.0 {
                *row = row.sub(&r.scale(c));
            }
        }
        self.rows.push((p, r));
        true
    }

    /// Particular solution (free variables at zero) and one direction per free variable.
    fn parametrize(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut x0 = vec![0.0; self.n];
        for (p, row) in &self.rows {
            x0[*p] = -row.konst;
        }
        let pivots: Vec<usize> = self.rows.iter().map(|r| r.0).collect();
        let mut dirs = Vec::new();
        for free in (0..self.n).filter(|i| !pivots.contains(i)) {
            let mut d = vec![0.0; self.n];
            d[free] = 1.0;
            for (p, row) in &self.rows {
                d[*p] = -row.coef[free];
            }
            dirs.push(d);
        }
        (x0, dirs)
    }
}

/// Feasible set of one piece combination, described by its vertices.
#[derive(Debug, Clone)]
pub(crate) struct Region {
    pub vertices: Vec<Vec<f64>>,
}

pub(crate) struct System {
    pub n: usize,
    pub clauses: Vec<Clause>,
    /// Inequalities that always apply (variable bounds).
    pub always: Vec<Affine>,
}

impl System {
    /// Regions of every consistent piece combination with a nonempty feasible set.
    pub fn solve(&self) -> Vec<Region> {
        let mut out = Vec::new();
        let mut les = self.always.clone();
        self.dfs(0, Echelon::new(self.n), &mut les, &mut out);
        out
    }

    fn dfs(&self, depth: usize, ech: Echelon, les: &mut Vec<Affine>, out: &mut Vec<Region>) {
        if depth == self.clauses.len() {
            if let Some(r) = region(&ech, les) {
                out.push(r);
            }
            return;
        }
        for piece in &self.clauses[depth] {
            let mut e = ech.clone();
            if !piece.eqs.iter().all(|q| e.add(q)) {
                continue;
            }
            let mark = les.len();
            les.extend(piece.les.iter().cloned());
            if e.rows.len() == self.n {
                // fully determined: check now instead of at the leaves
                let (x, _) = e.parametrize();
                if les.iter().any(|a| a.eval(&x) > TOL) {
                    les.truncate(mark);
                    continue;
                }
            }
            self.dfs(depth + 1, e, les, out);
            les.truncate(mark);
        }
    }
}

fn region(ech: &Echelon, les: &[Affine]) -> Option<Region> {
    let (x0, dirs) = ech.parametrize();
    let k = dirs.len();
    let point = |z: &[f64]| -> Vec<f64> {
        let mut x = x0.clone();
        for (d, zi) in dirs.iter().zip(z) {
            for (xi, di) in x.iter_mut().zip(d) {
                *xi += zi * di;
            }
        }
        x
    };
    let feasible = |x: &[f64]| les.iter().all(|a| a.eval(x) <= TOL * (1.0 + a.konst.abs()));
    if k == 0 {
        return feasible(&x0).then(|| Region { vertices: vec![x0] });
    }
    // constraints in the free coordinates: g . z + h <= 0
    let reduced: Vec<(Vec<f64>, f64)> = les
        .iter()
        .map(|a| (dirs.iter().map(|d| a.coef.iter().zip(d).map(|(c, v)| c * v).sum()).collect(), a.eval(&x0)))
        .filter(|(g, _): &(Vec<f64>, f64)| g.iter().any(|v| v.abs() > 1e-14))
        .collect();
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    let m = reduced.len();
    let mut idx: Vec<usize> = (0..k).collect();
    if m >= k {
        loop {
            let a: Vec<Vec<f64>> = idx.iter().map(|&i| reduced[i].0.clone()).collect();
            let b: Vec<f64> = idx.iter().map(|&i| -reduced[i].1).collect();
            if let Some(z) = solve_square(a, b) {
                let x = point(&z);
                if feasible(&x) && !vertices.iter().any(|v| close(v, &x)) {
                    vertices.push(x);
                }
            }
            // next k-subset of 0..m
            let mut i = k;
            while i > 0 && idx[i - 1] == m - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    (!vertices.is_empty()).then_some(Region { vertices })
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12)
}

/// Gaussian elimination with partial pivoting; `None` when singular.
pub(crate) fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[p][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, p);
        b.swap(col, p);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..n {
                        a[r][c] -= f * a[col][c];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_equation_single_solution() {
        // x = min(1, 2 - x)  ->  x = 1
        let n = 1;
        let x = Affine::var(n, 0);
        let two_minus_x = Affine::constant(n, 2.0).sub(&x);
        let sys = System {
            n,
            clauses: vec![equation(&x, pmin(&[leaf(Affine::constant(n, 1.0)), leaf(two_minus_x)]))],
            always: vec![],
        };
        let regions = sys.solve();
        assert!(regions.iter().all(|r| (r.vertices[0][0] - 1.0).abs() < 1e-12));
        assert!(!regions.is_empty());
    }

    #[test]
    fn identity_clause_yields_interval_vertices() {
        // x = min(x, 0.5) with 0 <= x <= 1 holds for x in [0, 0.5]
        let n = 1;
        let x = Affine::var(n, 0);
        let sys = System {
            n,
            clauses: vec![equation(&x, pmin(&[leaf(x.clone()), leaf(Affine::constant(n, 0.5))]))],
            always: vec![x.scale(-1.0), x.sub(&Affine::constant(n, 1.0))],
        };
        let mut ends: Vec<f64> = sys.solve().iter().flat_map(|r| r.vertices.iter().map(|v| v[0])).collect();
        ends.sort_by(f64::total_cmp);
        ends.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        assert_eq!(ends, vec![0.0, 0.5]);
    }

    #[test]
    fn max_of_min() {
        let e = pmax(&[pmin(&[leaf(Affine::constant(1, 3.0)), leaf(Affine::var(1, 0))]), leaf(Affine::constant(1, 1.0))]);
        // every alternative describes max(min(3, x), 1) on its own region
        for (v, cons) in &e {
            for x in [-1.0, 0.5, 2.0, 5.0] {
                if cons.iter().all(|c| c.eval(&[x]) <= 0.0) {
                    assert_eq!(v.eval(&[x]), f64::max(f64::min(3.0, x), 1.0));
                }
            }
        }
    }

    #[test]
    fn square_solver() {
        let x = solve_square(vec![vec![0.0, 2.0], vec![1.0, 1.0]], vec![2.0, 3.0]).unwrap();
        assert_eq!(x, vec![2.0, 1.0]);
        assert!(solve_square(vec![vec![1.0, 1.0], vec![2.0, 2.0]], vec![1.0, 2.0]).is_none());
    }
}
