use super::{
    EikonalError, EikonalOperator, InitialField, MuscleStimulus, MuscleStimulusSet, SolverMode,
    SolverOptions,
};
use crate::krylov;
use crate::mesh::{CellTensor, NodalField, SimplicialMesh};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NewtonStats {
    pub iterations: usize,
    pub relative_residual: f64,
    pub krylov_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub field: NodalField,
    /// Stimuli imposed as Dirichlet values at the last pseudo-step, one per
    /// vertex, sorted by vertex.
    pub active: Vec<MuscleStimulus>,
    /// Merged stimuli that were never imposed.
    pub inactive: Vec<MuscleStimulus>,
    pub steps: usize,
    pub newton_iterations: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One implicit BDF step with `active` imposed as Dirichlet values.
///
/// `history[0]` is `u^n` and `history[1]`, when present and `bdf_order` is 2,
/// is `u^{n-1}`. `step` only labels errors.
pub fn pseudo_time_step(
    op: &EikonalOperator<'_>,
    history: &[&[f64]],
    active: &[MuscleStimulus],
    opts: &SolverOptions,
    step: usize,
) -> Result<(NodalField, NewtonStats), EikonalError> {
    let u_n = history[0];
    let n = u_n.len();
    let (alpha, u_tilde): (f64, Vec<f64>) = match history.get(1) {
        Some(u_nm1) if opts.bdf_order == 2 => (
            1.5,
            u_n.iter().zip(*u_nm1).map(|(a, b)| 2.0 * a - 0.5 * b).collect(),
        ),
        _ => (1.0, u_n.to_vec()),
    };
    let dt = opts.dt;
    let mut fixed = vec![false; n];
    let mut u = u_n.to_vec();
    for s in active {
        fixed[s.vertex] = true;
        u[s.vertex] = s.time;
    }
    let mass = op.lumped_mass();
    let reference = norm(
        &mass
            .iter()
            .zip(&u_tilde)
            .map(|(m, ut)| m * (ut / dt + 1.0))
            .collect::<Vec<_>>(),
    );
    let free_residual = |u: &[f64]| {
        let mut r = op.residual(u, &u_tilde, alpha, dt);
        for (ri, f) in r.iter_mut().zip(&fixed) {
            if *f {
                *ri = 0.0;
            }
        }
        let rn = norm(&r);
        (r, rn)
    };
    let (mut r, mut rn) = free_residual(&u);
    let mut stats = NewtonStats::default();
    let mut increases = 0;
    for it in 0..opts.newton_max_iter {
        if rn <= opts.newton_tol * reference {
            break;
        }
        stats.iterations = it + 1;
        let mut j = op.jacobian(&u, alpha, dt);
        j.eliminate(&fixed);
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let mut delta = vec![0.0; n];
        let ks = krylov::solve(&j, &rhs, &mut delta, &opts.krylov)
            .map_err(|source| EikonalError::Linear { step, source })?;
        stats.krylov_iterations += ks.iterations;
        for (d, f) in delta.iter_mut().zip(&fixed) {
            if *f {
                *d = 0.0;
            }
        }
        let mut lambda = 1.0;
        let (trial, r_t, rn_t) = loop {
            let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + lambda * d).collect();
            let (r_t, rn_t) = free_residual(&trial);
            if rn_t <= rn || lambda < 1.0 / 1024.0 {
                break (trial, r_t, rn_t);
            }
            lambda *= 0.5;
        };
        if rn_t > rn {
            increases += 1;
            if increases >= opts.divergence_window {
                return Err(EikonalError::NewtonDiverged {
                    step,
                    window: opts.divergence_window,
                    residual: rn_t / reference,
                });
            }
        } else {
            increases = 0;
        }
        u = trial;
        r = r_t;
        rn = rn_t;
    }
    stats.relative_residual = rn / reference;
    if rn > opts.newton_tol * reference {
        return Err(EikonalError::NewtonNotConverged {
            step,
            iterations: opts.newton_max_iter,
            residual: rn / reference,
        });
    }
    Ok((NodalField::from_vec_unchecked(u), stats))
}

/// Marches the pseudo-time problem to steady state.
pub fn solve(
    mesh: &SimplicialMesh,
    sigma: &[CellTensor],
    c_f: f64,
    s0: &MuscleStimulusSet,
    opts: &SolverOptions,
) -> Result<SolveOutcome, EikonalError> {
    if !(c_f.is_finite() && c_f > 0.0) {
        return Err(EikonalError::InvalidModel(format!("c_f must be positive, got {c_f}")));
    }
    opts.validate()?;
    let op = EikonalOperator::new(mesh, sigma, c_f, opts.grad_regularization)?;
    solve_with_operator(&op, s0, opts)
}

/// [`solve`] with a prebuilt operator, so repeated solves on one mesh share
/// the assembly.
pub fn solve_with_operator(
    op: &EikonalOperator<'_>,
    s0: &MuscleStimulusSet,
    opts: &SolverOptions,
) -> Result<SolveOutcome, EikonalError> {
    opts.validate()?;
    if s0.is_empty() {
        return Err(EikonalError::NoStimuli);
    }
    s0.validate(op.mesh())?;
    let stim = s0.merged();
    let t_start = stim.iter().map(|s| s.time).fold(f64::INFINITY, f64::min);
    let t_last = stim.iter().map(|s| s.time).fold(f64::NEG_INFINITY, f64::max);
    let init = match opts.initial {
        InitialField::BelowEarliest => t_start + 2.0 * opts.dt,
        InitialField::Constant(v) => v,
    };
    let n = op.mesh().num_vertices();
    let mut u = vec![init; n];
    let mut prev: Option<Vec<f64>> = None;
    let mut active = vec![false; stim.len()];
    let mut ever_active = false;
    let mut newton_total = 0;
    let mut change = f64::INFINITY;
    for step in 1..=opts.max_pseudo_steps {
        let t_next = t_start + step as f64 * opts.dt;
        let next_active: Vec<bool> = match opts.mode {
            SolverMode::Classic => vec![true; stim.len()],
            // A stimulus imposed at the previous step sits exactly at its
            // prescribed value, which would fail the strict comparison and
            // flip it off every other step; keep it while it stays pinned.
            SolverMode::Novel => stim
                .iter()
                .zip(&active)
                .map(|(s, &was)| {
                    let u_here = u[s.vertex];
                    (s.time < t_next && s.time < u_here) || (was && u_here == s.time)
                })
                .collect(),
        };
        ever_active |= next_active.iter().any(|&a| a);
        let changed = next_active != active;
        let dirichlet: Vec<MuscleStimulus> = stim
            .iter()
            .zip(&next_active)
            .filter(|(_, &a)| a)
            .map(|(s, _)| *s)
            .collect();
        let history: Vec<&[f64]> = match &prev {
            Some(p) => vec![&u, p],
            None => vec![&u],
        };
        let (u_new, stats) = pseudo_time_step(op, &history, &dirichlet, opts, step)?;
        newton_total += stats.iterations;
        change = u_new
            .iter()
            .zip(&u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        log::debug!(
            "pseudo-step {step}: t = {t_next:.6e} s, active {}/{}, newton {} (res {:.2e}, krylov {}), change {change:.3e} s",
            dirichlet.len(),
            stim.len(),
            stats.iterations,
            stats.relative_residual,
            stats.krylov_iterations
        );
        let steady = !changed && t_next > t_last && change <= opts.steady_tol;
        prev = Some(std::mem::replace(&mut u, u_new.into_vec()));
        active = next_active;
        if steady {
            let (on, off): (Vec<_>, Vec<_>) = stim.iter().zip(&active).partition(|(_, &a)| a);
            log::info!(
                "steady after {step} pseudo-steps, {} of {} stimuli active",
                on.len(),
                stim.len()
            );
            return Ok(SolveOutcome {
                field: NodalField::from_vec_unchecked(u),
                active: on.into_iter().map(|(s, _)| *s).collect(),
                inactive: off.into_iter().map(|(s, _)| *s).collect(),
                steps: step,
                newton_iterations: newton_total,
            });
        }
    }
    if !ever_active {
        return Err(EikonalError::NoActiveStimulus);
    }
    Err(EikonalError::NotSteady {
        steps: opts.max_pseudo_steps,
        change,
    })
}
