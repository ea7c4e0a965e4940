//! First-order cell scheme on the same networks, used as an independent reference.

use crate::curve::CumulativeCurve;
use crate::error::{LtmError, Result};
use crate::fd::TriangularFD;
use crate::junction::evaluate;
use crate::kernel::reconstruct_field;
use crate::network::Network;
use crate::sim::Trajectory;

/// Cell densities of every link.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    /// Cell length per link.
    pub dx: Vec<f64>,
    pub dt: f64,
    pub cells: Vec<Vec<f64>>,
}

impl CellGrid {
    /// Cell averages of the initial link profiles, `cells_per_link` cells each.
    pub fn from_network(net: &Network, cells_per_link: usize, dt: Option<f64>) -> Result<Self> {
        if cells_per_link == 0 {
            return Err(LtmError::Config("the oracle needs at least one cell per link".into()));
        }
        let mut dx = Vec::new();
        let mut cells = Vec::new();
        for l in &net.links {
            let h = l.length() / cells_per_link as f64;
            let p = l.profile();
            cells.push(
                (0..cells_per_link)
                    .map(|i| (p.cumulative(i as f64 * h) - p.cumulative((i + 1) as f64 * h)) / h)
                    .collect(),
            );
            dx.push(h);
        }
        let dt = dt.unwrap_or_else(|| {
            net.links.iter().zip(&dx).map(|(l, h)| 0.8 * h / max_speed(l.fd())).fold(f64::INFINITY, f64::min)
        });
        let grid = Self { dx, dt, cells };
        grid.check_cfl(net)?;
        Ok(grid)
    }

    fn check_cfl(&self, net: &Network) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(LtmError::Config(format!("oracle dt must be positive, got {}", self.dt)));
        }
        for (l, &h) in net.links.iter().zip(&self.dx) {
            let lhs = self.dt * max_speed(l.fd());
            if lhs > h * (1.0 + 1e-12) {
                return Err(LtmError::Cfl { lhs, dx: h });
            }
        }
        Ok(())
    }
}

fn max_speed(fd: &TriangularFD) -> f64 {
    fd.v_free().max(fd.w_back())
}

fn cell_demand(fd: &TriangularFD, k: f64) -> f64 {
    (fd.v_free() * k).min(fd.capacity())
}

fn cell_supply(fd: &TriangularFD, k: f64) -> f64 {
    ((fd.k_jam() - k) * fd.w_back()).min(fd.capacity())
}

/// Output of [`godunov_run`].
#[derive(Debug, Clone)]
pub struct OracleRun {
    pub grid: CellGrid,
    /// Boundary counts at every oracle step, on the counting reference of the initial profiles.
    pub upstream: Vec<CumulativeCurve>,
    pub downstream: Vec<CumulativeCurve>,
    /// Times of the density snapshots.
    pub snapshot_times: Vec<f64>,
    /// `snapshots[i][a]`: cell densities of link `a` at `snapshot_times[i]`.
    pub snapshots: Vec<Vec<Vec<f64>>>,
}

impl OracleRun {
    /// Cell-center coordinates of link `a`.
    pub fn cell_centers(&self, a: usize) -> Vec<f64> {
        let h = self.grid.dx[a];
        (0..self.grid.cells[a].len()).map(|i| (i as f64 + 0.5) * h).collect()
    }

    /// Average downstream flux of link `a` over `[t0, t1]`.
    pub fn mean_outflow(&self, a: usize, t0: f64, t1: f64) -> Result<f64> {
        Ok((self.downstream[a].eval(t1)? - self.downstream[a].eval(t0)?) / (t1 - t0))
    }

    pub fn mean_inflow(&self, a: usize, t0: f64, t1: f64) -> Result<f64> {
        Ok((self.upstream[a].eval(t1)? - self.upstream[a].eval(t0)?) / (t1 - t0))
    }
}

/// Run the cell scheme to `horizon`, keeping densities at the first step reaching each of `snapshot_at`.
///
/// Junctions must have static turning proportions.
pub fn godunov_run(
    net: &Network,
    cells_per_link: usize,
    dt: Option<f64>,
    horizon: f64,
    snapshot_at: &[f64],
) -> Result<OracleRun> {
    if let Some(j) = net.junctions.iter().find(|j| !j.static_turns) {
        return Err(LtmError::Config(format!("oracle needs static turns at junction `{}`", j.id)));
    }
    let mut grid = CellGrid::from_network(net, cells_per_link, dt)?;
    let dt = grid.dt;
    let nl = net.links.len();
    let mut upstream: Vec<CumulativeCurve> =
        net.links.iter().map(|l| CumulativeCurve::starting_at(0.0, l.profile().upstream_count())).collect();
    let mut downstream: Vec<CumulativeCurve> =
        net.links.iter().map(|l| CumulativeCurve::starting_at(0.0, l.profile().downstream_count())).collect();
    let mut queue = vec![0.0; net.origins.len()];
    let mut pending: Vec<f64> = snapshot_at.to_vec();
    pending.sort_by(f64::total_cmp);
    pending.reverse();
    let mut snapshot_times = Vec::new();
    let mut snapshots = Vec::new();

    let steps = (horizon / dt - 1e-9).ceil() as usize;
    for n in 0..=steps {
        let t = n as f64 * dt;
        while pending.last().is_some_and(|&s| s <= t + 1e-12) {
            pending.pop();
            snapshot_times.push(t);
            snapshots.push(grid.cells.clone());
        }
        if n == steps {
            break;
        }
        let d: Vec<f64> = (0..nl).map(|a| cell_demand(net.links[a].fd(), *grid.cells[a].last().unwrap())).collect();
        let s: Vec<f64> = (0..nl).map(|a| cell_supply(net.links[a].fd(), grid.cells[a][0])).collect();
        let mut f = vec![0.0; nl];
        let mut g = vec![0.0; nl];
        for (i, o) in net.origins.iter().enumerate() {
            let arriving = o.demand.value(t);
            let flow = (arriving + queue[i] / dt).min(s[o.to_link]);
            f[o.to_link] = flow;
            queue[i] = (queue[i] + (arriving - flow) * dt).max(0.0);
        }
        for o in &net.destinations {
            g[o.from_link] = d[o.from_link].min(o.supply.value(t));
        }
        for j in &net.junctions {
            let dem: Vec<f64> = j.incoming.iter().map(|&a| d[a]).collect();
            let sup: Vec<f64> = j.outgoing.iter().map(|&b| s[b]).collect();
            let fl = evaluate(&j.spec, &dem, &sup, None)?;
            for (i, &a) in j.incoming.iter().enumerate() {
                g[a] = fl.g[i];
            }
            for (k, &b) in j.outgoing.iter().enumerate() {
                f[b] = fl.f[k];
            }
        }
        for a in 0..nl {
            let fd = net.links[a].fd();
            let k = &mut grid.cells[a];
            let m = k.len();
            let mut flux = Vec::with_capacity(m + 1);
            flux.push(f[a]);
            for i in 0..m - 1 {
                flux.push(cell_demand(fd, k[i]).min(cell_supply(fd, k[i + 1])));
            }
            flux.push(g[a]);
            let r = dt / grid.dx[a];
            for i in 0..m {
                k[i] = (k[i] + r * (flux[i] - flux[i + 1])).clamp(0.0, fd.k_jam());
            }
            let tn = (n + 1) as f64 * dt;
            let (nf, ng) = (upstream[a].last_count() + f[a] * dt, downstream[a].last_count() + g[a] * dt);
            upstream[a].push(tn, nf)?;
            downstream[a].push(tn, ng)?;
        }
    }
    Ok(OracleRun { grid, upstream, downstream, snapshot_times, snapshots })
}

/// Agreement between a simulated trajectory and an oracle run on the same network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleComparison {
    /// Largest boundary flux difference in steady segments, relative to link capacity.
    pub max_flux_error: f64,
    pub steady_samples: usize,
    /// Largest `int |k_ltm - k_cell| dx` over the snapshot times, relative to `K L`.
    pub max_density_l1: f64,
}

/// Compare step-averaged boundary fluxes where the simulated flux is constant over `window`
/// on both sides, and reconstructed densities at the oracle snapshots.
pub fn compare_with_oracle(traj: &Trajectory, oracle: &OracleRun, window: f64) -> Result<OracleComparison> {
    let dt = traj.dt;
    let steps = traj.steps;
    let half = (window / dt).round() as usize;
    let mut max_flux_error: f64 = 0.0;
    let mut steady_samples = 0;
    let mut max_density_l1: f64 = 0.0;
    for (a, l) in traj.network.links.iter().enumerate() {
        let c = l.fd().capacity();
        for (curve, reference) in [(l.upstream(), &oracle.upstream[a]), (l.downstream(), &oracle.downstream[a])] {
            let mut ltm = Vec::with_capacity(steps);
            let mut cell = Vec::with_capacity(steps);
            for n in 0..steps {
                let (t0, t1) = (n as f64 * dt, (n + 1) as f64 * dt);
                ltm.push((curve.eval(t1)? - curve.eval(t0)?) / dt);
                cell.push((reference.eval(t1)? - reference.eval(t0)?) / dt);
            }
            for n in half..steps.saturating_sub(half) {
                let span = &ltm[n - half..=n + half];
                let (lo, hi) = span.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
                if hi - lo <= 1e-12 * c.max(1.0) {
                    steady_samples += 1;
                    max_flux_error = max_flux_error.max((ltm[n] - cell[n]).abs() / c);
                }
            }
        }
        if oracle.snapshot_times.is_empty() {
            continue;
        }
        let data = l.domain_data()?;
        let xs = oracle.cell_centers(a);
        let field = reconstruct_field(&data, &xs, &oracle.snapshot_times)?;
        let scale = l.fd().k_jam() * l.length();
        for (i, snap) in oracle.snapshots.iter().enumerate() {
            max_density_l1 = max_density_l1.max(field.l1_row_distance(i, &snap[a]) / scale);
        }
    }
    Ok(OracleComparison { max_flux_error, steady_samples, max_density_l1 })
}
