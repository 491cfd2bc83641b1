use std::ops::Range;

use rayon::prelude::*;

use super::adam::Adam;
use super::svgd::svgd_direction;
use super::svn::{solve_block_diagonal, solve_full_system, svn_direction, SolveInfo};
use super::target::Target;
use super::{KernelMetric, Method, MethodConfig, SvnSystem};
use crate::curvature::{CurvatureEstimate, CurvatureKind};
use crate::error::{check_len, Error, Result};
use crate::kernel::{build_kernel_state, KernelState, MetricOperator};

const MAX_REJECTIONS: usize = 5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    /// Candidates discarded for non-finite values before one was accepted.
    pub rejections: usize,
    pub cg_iters: usize,
    pub fallbacks: usize,
}

impl std::ops::AddAssign for StepStats {
    fn add_assign(&mut self, o: Self) {
        self.rejections += o.rejections;
        self.cg_iters += o.cg_iters;
        self.fallbacks += o.fallbacks;
    }
}

/// Per-run optimiser state: Adam moments for the ensemble baseline, cached
/// curvatures between refreshes, and the directions of the last step.
#[derive(Debug, Clone)]
pub struct Stepper {
    cfg: MethodConfig,
    adam: Vec<Adam>,
    cached: Option<(Range<usize>, Vec<CurvatureEstimate>)>,
    steps: usize,
    last_svgd: Vec<Vec<f64>>,
    last_direction: Vec<Vec<f64>>,
}

impl Stepper {
    pub fn new(cfg: &MethodConfig, n: usize, dim: usize) -> Result<Self> {
        cfg.validate(dim)?;
        let adam = if cfg.method == Method::Ensemble {
            (0..n).map(|_| Adam::new(dim, cfg.adam)).collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            cfg: cfg.clone(),
            adam,
            cached: None,
            steps: 0,
            last_svgd: Vec::new(),
            last_direction: Vec::new(),
        })
    }

    pub fn config(&self) -> &MethodConfig {
        &self.cfg
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    /// SVGD direction computed during the last step (empty for the ensemble).
    pub fn last_svgd_direction(&self) -> &[Vec<f64>] {
        &self.last_svgd
    }

    /// Direction applied in the last step, before scaling by the step size.
    pub fn last_direction(&self) -> &[Vec<f64>] {
        &self.last_direction
    }

    /// Curvatures the last step used, with the coordinate range they cover.
    pub fn last_curvatures(&self) -> Option<(&Range<usize>, &[CurvatureEstimate])> {
        self.cached.as_ref().map(|(r, c)| (r, c.as_slice()))
    }

    /// One synchronised update of all particles. Every direction is computed
    /// from the pre-step particles before any of them moves.
    pub fn step<T: Target + ?Sized>(&mut self, target: &T, particles: &mut [Vec<f64>]) -> Result<StepStats> {
        for p in particles.iter() {
            check_len("step particle", target.dim(), p.len())?;
        }
        let stats = if self.cfg.method == Method::Ensemble {
            self.ensemble_step(target, particles)?
        } else {
            let (dir, mut stats) = self.direction(target, particles)?;
            let eps = self.cfg.step_size;
            let (accepted, rejections) = try_with_backoff(target, eps, |e| {
                particles
                    .iter()
                    .zip(&dir)
                    .map(|(p, v)| p.iter().zip(v).map(|(a, b)| a + e * b).collect())
                    .collect()
            })?;
            particles.iter_mut().zip(accepted).for_each(|(p, a)| *p = a);
            self.last_direction = dir;
            stats.rejections = rejections;
            stats
        };
        self.steps += 1;
        Ok(stats)
    }

    /// Update direction for the configured particle method at `particles`.
    pub fn direction<T: Target + ?Sized>(
        &mut self,
        target: &T,
        particles: &[Vec<f64>],
    ) -> Result<(Vec<Vec<f64>>, StepStats)> {
        let grads: Vec<Vec<f64>> = particles
            .par_iter()
            .map(|p| target.grad_log_density(p))
            .collect::<Result<_>>()?;

        let dim = target.dim();
        let slice = match self.cfg.method {
            Method::LlSvn => target.last_layer(),
            _ => 0..dim,
        };
        let curvatures = match self.cfg.curvature_kind() {
            Some(kind) => Some(self.curvatures(target, particles, kind, slice.clone())?),
            None => None,
        };

        let metric = match (self.cfg.kernel_metric, &curvatures) {
            (KernelMetric::AvgCurvature, Some(c)) => {
                let avg = CurvatureEstimate::average(c)?;
                if slice.start == 0 && slice.end == dim {
                    MetricOperator::Curvature(avg)
                } else {
                    MetricOperator::Partitioned {
                        split: slice.start,
                        tail: avg,
                    }
                }
            }
            _ => MetricOperator::Identity,
        };
        let ks = build_kernel_state(&metric, particles, self.cfg.bandwidth)?;
        let v_svgd = svgd_direction(&grads, &ks)?;

        let mut stats = StepStats::default();
        let dir = match self.cfg.method {
            Method::Svgd => v_svgd.clone(),
            Method::Svn => {
                let curv = curvatures.as_deref().unwrap_or_default();
                let (v, info) = self.newton_direction(&ks, curv, &v_svgd)?;
                add_info(&mut stats, info);
                v
            }
            Method::LlSvn => {
                let curv = curvatures.as_deref().unwrap_or_default();
                let ks_ll = if slice.start == 0 && slice.end == dim {
                    ks.clone()
                } else {
                    ks.restrict(slice.clone())
                };
                let rhs: Vec<Vec<f64>> = v_svgd.iter().map(|v| v[slice.clone()].to_vec()).collect();
                let (v_ll, info) = self.newton_direction(&ks_ll, curv, &rhs)?;
                add_info(&mut stats, info);
                v_svgd
                    .iter()
                    .zip(v_ll)
                    .map(|(v, tail)| {
                        let mut out = v.clone();
                        out[slice.clone()].copy_from_slice(&tail);
                        out
                    })
                    .collect()
            }
            Method::Ensemble => unreachable!("ensemble has no particle direction"),
        };
        self.last_svgd = v_svgd;
        Ok((dir, stats))
    }

    fn newton_direction(
        &self,
        ks: &KernelState,
        curvatures: &[CurvatureEstimate],
        rhs: &[Vec<f64>],
    ) -> Result<(Vec<Vec<f64>>, SolveInfo)> {
        let (alpha, info) = match self.cfg.svn_system {
            SvnSystem::Full => solve_full_system(ks, curvatures, rhs, self.cfg.cross_term, &self.cfg.cg)?,
            SvnSystem::BlockDiagonal => solve_block_diagonal(ks, curvatures, rhs, &self.cfg.cg)?,
        };
        Ok((svn_direction(&alpha, ks)?, info))
    }

    fn curvatures<T: Target + ?Sized>(
        &mut self,
        target: &T,
        particles: &[Vec<f64>],
        kind: CurvatureKind,
        range: Range<usize>,
    ) -> Result<Vec<CurvatureEstimate>> {
        let fresh = self.steps.is_multiple_of(self.cfg.curvature_refresh);
        if let (false, Some((r, c))) = (fresh, &self.cached) {
            if *r == range && c.len() == particles.len() {
                return Ok(c.clone());
            }
        }
        let c: Vec<CurvatureEstimate> = particles
            .par_iter()
            .map(|p| target.curvature(p, kind, range.clone()))
            .collect::<Result<_>>()?;
        if !c.iter().all(CurvatureEstimate::is_finite) {
            return Err(Error::PoisonedParameters("non-finite curvature"));
        }
        self.cached = Some((range, c.clone()));
        Ok(c)
    }

    fn ensemble_step<T: Target + ?Sized>(&mut self, target: &T, particles: &mut [Vec<f64>]) -> Result<StepStats> {
        check_len("ensemble step particles", self.adam.len(), particles.len())?;
        let grads: Vec<Vec<f64>> = particles
            .par_iter()
            .map(|p| target.grad_log_density(p).map(|g| g.into_iter().map(|v| -v).collect()))
            .collect::<Result<_>>()?;
        let mut moments = Vec::new();
        let (accepted, rejections) = try_with_backoff(target, self.cfg.step_size, |lr| {
            let proposals: Vec<_> = self.adam.iter().zip(&grads).map(|(a, g)| a.propose(g, lr)).collect();
            let out = particles
                .iter()
                .zip(&proposals)
                .map(|(p, (d, _, _))| p.iter().zip(d).map(|(a, b)| a + b).collect())
                .collect();
            moments = proposals.into_iter().map(|(_, m, v)| (m, v)).collect();
            out
        })?;
        for (a, (m, v)) in self.adam.iter_mut().zip(moments) {
            a.commit(m, v);
        }
        self.last_direction = accepted
            .iter()
            .zip(particles.iter())
            .map(|(new, old)| new.iter().zip(old).map(|(a, b)| a - b).collect())
            .collect();
        particles.iter_mut().zip(accepted).for_each(|(p, a)| *p = a);
        Ok(StepStats::default().with_rejections(rejections))
    }
}

impl StepStats {
    fn with_rejections(mut self, r: usize) -> Self {
        self.rejections = r;
        self
    }
}

fn add_info(stats: &mut StepStats, info: SolveInfo) {
    stats.cg_iters += info.cg_iters;
    stats.fallbacks += info.fallbacks;
}

/// Builds a candidate with step size `eps`, halving it after each candidate
/// that is non-finite or has a non-finite log density.
fn try_with_backoff<T, F>(target: &T, eps: f64, mut build: F) -> Result<(Vec<Vec<f64>>, usize)>
where
    T: Target + ?Sized,
    F: FnMut(f64) -> Vec<Vec<f64>>,
{
    let mut e = eps;
    for attempt in 0..=MAX_REJECTIONS {
        let cand = build(e);
        let ok = cand.par_iter().all(|p| {
            p.iter().all(|v| v.is_finite()) && target.log_density(p).is_ok_and(f64::is_finite)
        });
        if ok {
            return Ok((cand, attempt));
        }
        log::warn!("rejected non-finite step with step size {e}");
        e *= 0.5;
    }
    Err(Error::StepFailed(MAX_REJECTIONS))
}
