use std::path::PathBuf;

use anyhow::Result;
use serde_json::{json, Value};
use solwalk::boundary_sampler::{sample_batch, speed_estimate, stationarity_check};
use solwalk::harmonic::{
    decay_exponent_fit, ecf, exact_ft_product_grid, fourier_verdict, local_dimension, log_grid, singularity_probe,
    EmpiricalMeasure, FourierEvaluation,
};
use solwalk::io::{self, SampleFormat};
use solwalk::lattice::entropy_sequence;
use solwalk::pisot::{certify_pisot, IntPoly};
use solwalk::step_measure::{dimension_bound, make_erdos, make_singular_by_speed, make_solomyak, YRule};
use solwalk::{LatticeElement, LatticeMeasure, LatticeSpec, StepMeasure};

use crate::{
    usage, CertifyArgs, Command, ConstructArgs, DimensionArgs, EcfArgs, EntropyArgs, FormatArg, FourierExactArgs,
    GridArgs, PisotArgs, Preset, Run, SampleArgs, SamplingArgs, SourceArgs, SpeedArgs, StationarityArgs, YRuleArg,
};

pub(crate) fn execute(ctx: &Run, command: &Command) -> Result<Value> {
    match command {
        Command::Construct(a) => construct(ctx, a),
        Command::Sample(a) => sample(ctx, a),
        Command::Speed(a) => speed(ctx, a),
        Command::Ecf(a) => ecf_cmd(ctx, a),
        Command::FourierExact(a) => fourier_exact(ctx, a),
        Command::CertifySingular(a) => certify(ctx, a),
        Command::Dimension(a) => dimension(ctx, a),
        Command::Entropy(a) => entropy(ctx, a),
        Command::Pisot(a) => pisot(ctx, a),
        Command::Stationarity(a) => stationarity(ctx, a),
    }
}

fn list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| usage(format!("bad {what} entry `{p}`"))))
        .collect()
}

fn element(s: &str) -> Result<LatticeElement> {
    let parts: Vec<i64> = s
        .split(':')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| usage(format!("bad lattice element `{s}`, expected r:p:q")))
        })
        .collect::<Result<_>>()?;
    match parts[..] {
        [r, p, q] => Ok(LatticeElement::new(r, p.into(), q.into())),
        _ => Err(usage(format!("bad lattice element `{s}`, expected r:p:q"))),
    }
}

fn levels(s: &str) -> Result<Vec<(i64, f64)>> {
    s.split(',')
        .map(|pair| {
            let (k, w) = pair
                .split_once(':')
                .ok_or_else(|| usage(format!("bad level `{pair}`, expected k:w")))?;
            let k = k.trim().parse().map_err(|_| usage(format!("bad level `{pair}`")))?;
            let w = w.trim().parse().map_err(|_| usage(format!("bad weight in `{pair}`")))?;
            Ok((k, w))
        })
        .collect()
}

fn poly(s: &str) -> Result<IntPoly> {
    Ok(s.parse::<IntPoly>()?)
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(usage(format!("--{name} must lie in (0, 1), got {v}")))
    }
}

fn check_sampling(s: &SamplingArgs) -> Result<()> {
    unit_interval("eps", s.eps)?;
    unit_interval("delta", s.delta)?;
    if s.n == 0 {
        return Err(usage("-n must be positive"));
    }
    Ok(())
}

fn load_measure(path: &Option<PathBuf>) -> Result<StepMeasure> {
    let path = path.as_ref().ok_or_else(|| usage("--measure is required"))?;
    Ok(io::read_json(path)?)
}

fn lattice_base(a: &ConstructArgs) -> Result<(LatticeSpec, LatticeMeasure)> {
    let m: Vec<i64> = list(&a.matrix, "matrix")?;
    let [p, q, r, s] = m[..] else {
        return Err(usage("--matrix needs four entries a,b,c,d"));
    };
    let spec = LatticeSpec::new([[p, q], [r, s]])?;
    let elements: Vec<LatticeElement> = a.atoms.split(',').map(element).collect::<Result<_>>()?;
    let weights: Vec<f64> = match &a.weights {
        Some(w) => list(w, "weight")?,
        None => vec![1.0; elements.len()],
    };
    if weights.len() != elements.len() {
        return Err(usage(format!("{} weights for {} atoms", weights.len(), elements.len())));
    }
    let total: f64 = weights.iter().sum();
    let base = LatticeMeasure::new(elements.into_iter().zip(weights.into_iter().map(|w| w / total)))?;
    Ok((spec, base))
}

fn y_rule(a: YRuleArg) -> YRule {
    match a {
        YRuleArg::Zero => YRule::Zero,
        YRuleArg::IndependentSign => YRule::IndependentSign,
    }
}

fn construct(ctx: &Run, a: &ConstructArgs) -> Result<Value> {
    let mu = match a.preset {
        Preset::Solomyak => make_solomyak(a.gamma, a.p, y_rule(a.y_rule))?,
        Preset::Erdos => {
            let cert = certify_pisot(&poly(&a.poly)?)?;
            make_erdos(&cert, &levels(&a.levels)?, a.q0, a.q1, y_rule(a.y_rule))?
        }
        Preset::Lattice => {
            let (spec, base) = lattice_base(a)?;
            StepMeasure::from_lattice(&spec, &base)?
        }
        Preset::SpeedSingular => {
            let (spec, base) = lattice_base(a)?;
            let lm = make_singular_by_speed(&spec, &base, &element(&a.g)?, a.l)?;
            StepMeasure::from_lattice(&spec, &lm)?
        }
    };
    if let Some(path) = &a.output {
        io::write_json(path, &mu)?;
    }
    let drift = mu.drift();
    let entropy = mu.shannon_entropy();
    ctx.report(
        a,
        json!({
            "files": { "measure": a.output },
            "measure": mu,
            "summary": {
                "drift": drift,
                "side": mu.side(),
                "entropy": entropy,
                "entropy_over_drift": if drift != 0.0 { Some(entropy / drift.abs()) } else { None },
                "x_symmetric": mu.is_x_symmetric(),
                "nondegeneracy": mu.nondegeneracy(4),
            },
        }),
    )
}

fn sample(ctx: &Run, a: &SampleArgs) -> Result<Value> {
    check_sampling(&a.sampling)?;
    let mu = load_measure(&a.measure)?;
    let s = &a.sampling;
    let samples = sample_batch(&mu, s.n, s.seed, s.eps, s.delta)?;
    let format = match a.format {
        FormatArg::Binary => SampleFormat::Binary,
        FormatArg::Csv => SampleFormat::Csv,
    };
    if let Some(path) = &a.output {
        io::write_samples(path, samples.samples(), format)?;
    }
    ctx.report(
        a,
        json!({
            "files": { "samples": a.output },
            "measure": mu,
            "seed": s.seed,
            "n": samples.len(),
            "max_err": samples.max_err(),
            "confidence": samples.confidence(),
            "failures": samples.failures(),
            "mean": samples.mean(),
        }),
    )
}

fn speed(ctx: &Run, a: &SpeedArgs) -> Result<Value> {
    let mu = load_measure(&a.measure)?;
    let est = speed_estimate(&mu, a.steps, a.trials, a.seed)?;
    ctx.report(a, json!({ "measure": mu, "seed": a.seed, "speed": est }))
}

/// Samples from `--samples` or drawn from `--measure`, plus the measure if any.
fn source(s: &SourceArgs) -> Result<(EmpiricalMeasure, Option<StepMeasure>)> {
    match (&s.samples, &s.measure) {
        (Some(path), None) => {
            if !(s.sample_err >= 0.0) {
                return Err(usage("--sample-err must be nonnegative"));
            }
            let xs = io::read_samples(path)?;
            Ok((EmpiricalMeasure::new(xs, None, s.sample_err, 1.0, 0)?, None))
        }
        (None, Some(_)) => {
            check_sampling(&s.sampling)?;
            let mu = load_measure(&s.measure)?;
            let p = &s.sampling;
            Ok((sample_batch(&mu, p.n, p.seed, p.eps, p.delta)?, Some(mu)))
        }
        _ => Err(usage("exactly one of --measure and --samples is required")),
    }
}

fn grid(g: &GridArgs) -> Result<Vec<f64>> {
    let ts = match &g.t {
        Some(list_str) => list(list_str, "frequency")?,
        None => {
            if !(g.t_min > 0.0 && g.t_max >= g.t_min && g.t_count > 0) {
                return Err(usage("need 0 < t-min <= t-max and t-count > 0"));
            }
            log_grid(g.t_min, g.t_max, g.t_count)
        }
    };
    if ts.is_empty() || ts.iter().any(|t| !t.is_finite()) {
        return Err(usage("frequency grid must be nonempty and finite"));
    }
    Ok(ts)
}

fn fourier_body(evals: &[FourierEvaluation]) -> Value {
    json!({
        "grids": { "t": evals.iter().map(|e| e.t).collect::<Vec<_>>() },
        "values": {
            "re": evals.iter().map(|e| e.re).collect::<Vec<_>>(),
            "im": evals.iter().map(|e| e.im).collect::<Vec<_>>(),
            "modulus": evals.iter().map(|e| e.modulus()).collect::<Vec<_>>(),
        },
        "stat_err": evals.iter().map(|e| e.stat_err).collect::<Vec<_>>(),
        "trunc_err": evals.iter().map(|e| e.trunc_err).collect::<Vec<_>>(),
        "decay_fit": decay_exponent_fit(evals).ok(),
        "verdict": fourier_verdict(evals),
    })
}

fn with(mut body: Value, extra: Value) -> Value {
    if let (Value::Object(b), Value::Object(e)) = (&mut body, extra) {
        b.extend(e);
    }
    body
}

fn ecf_cmd(ctx: &Run, a: &EcfArgs) -> Result<Value> {
    let ts = grid(&a.grid)?;
    let (samples, mu) = source(&a.source)?;
    let evals: Vec<FourierEvaluation> = ts.iter().map(|&t| ecf(&samples, t)).collect::<solwalk::Result<_>>()?;
    let seed = mu.as_ref().map(|_| a.source.sampling.seed);
    ctx.report(
        a,
        with(
            fourier_body(&evals),
            json!({ "measure": mu, "seed": seed, "n": samples.len() }),
        ),
    )
}

fn fourier_exact(ctx: &Run, a: &FourierExactArgs) -> Result<Value> {
    unit_interval("eps", a.eps)?;
    let ts = grid(&a.grid)?;
    let mu = load_measure(&a.measure)?;
    let evals = exact_ft_product_grid(&mu, &ts, a.paths, a.seed, a.eps)?;
    ctx.report(a, with(fourier_body(&evals), json!({ "measure": mu, "seed": a.seed })))
}

fn certify(ctx: &Run, a: &CertifyArgs) -> Result<Value> {
    unit_interval("eps", a.eps)?;
    if a.l_min > a.l_max {
        return Err(usage("need l-min <= l-max"));
    }
    let mu = load_measure(&a.measure)?;
    let cert = certify_pisot(&poly(&a.poly)?)?;
    let gamma = mu
        .gamma()
        .ok_or_else(|| usage("measure has no vertical lattice step"))?;
    if (gamma - cert.gamma()).abs() > 1e-12 * gamma.abs().max(1.0) {
        return Err(usage(format!(
            "measure step {gamma} is not ln of the Pisot root {}",
            cert.alpha
        )));
    }
    let ls: Vec<i64> = (a.l_min..=a.l_max).collect();
    let probe = singularity_probe(&mu, &cert, &ls, a.paths, a.seed, a.eps)?;
    ctx.report(
        a,
        json!({
            "measure": mu,
            "seed": a.seed,
            "pisot": cert,
            "grids": {
                "l": probe.rows.iter().map(|r| r.l).collect::<Vec<_>>(),
                "t": probe.rows.iter().map(|r| r.t).collect::<Vec<_>>(),
            },
            "values": probe.rows.iter().map(|r| r.value).collect::<Vec<_>>(),
            "stat_err": probe.rows.iter().map(|r| r.stat_err).collect::<Vec<_>>(),
            "trunc_err": probe.rows.iter().map(|r| r.trunc_err).collect::<Vec<_>>(),
            "certificate": probe.certificate,
            "min_value": probe.min_value,
            "min_lower": probe.min_lower,
            "above_floor": probe.above_floor,
            "verdict": probe.verdict,
        }),
    )
}

fn dimension(ctx: &Run, a: &DimensionArgs) -> Result<Value> {
    let (samples, mu) = source(&a.source)?;
    let r_grid = match (a.r_min, a.r_max) {
        (Some(lo), Some(hi)) => {
            if !(lo > 0.0 && hi > lo && a.r_count >= 2) {
                return Err(usage("need 0 < r-min < r-max and r-count >= 2"));
            }
            Some(log_grid(lo, hi, a.r_count))
        }
        (None, None) => None,
        _ => return Err(usage("give both --r-min and --r-max or neither")),
    };
    let est = local_dimension(&samples, r_grid.as_deref(), a.probes, a.source.sampling.seed)?;
    let bound = match &mu {
        Some(m) if m.drift() != 0.0 => Some(dimension_bound(m, a.kmax, a.budget)?),
        _ => None,
    };
    let consistent = bound
        .as_ref()
        .map(|b| est.local <= b.capped + 0.1 && est.correlation <= b.capped + 0.1);
    let seed = mu.as_ref().map(|_| a.source.sampling.seed);
    ctx.report(
        a,
        json!({
            "measure": mu,
            "seed": seed,
            "n": samples.len(),
            "grids": { "r": est.r },
            "estimate": est,
            "bound": bound,
            "within_bound": consistent,
        }),
    )
}

fn entropy(ctx: &Run, a: &EntropyArgs) -> Result<Value> {
    let mu = load_measure(&a.measure)?;
    let (spec, lm) = mu.lattice().ok_or_else(|| usage("entropy needs a lattice measure"))?;
    let seq = entropy_sequence(spec, lm, a.kmax, a.budget)?;
    let h: Vec<f64> = seq.entries.iter().map(|e| e.entropy).collect();
    let mut subadditive = true;
    for j in 1..=h.len() {
        for k in 1..=h.len() {
            if j + k <= h.len() {
                subadditive &= h[j + k - 1] <= h[j - 1] + h[k - 1];
            }
        }
    }
    ctx.report(
        a,
        json!({
            "measure": mu,
            "grids": { "k": seq.entries.iter().map(|e| e.k).collect::<Vec<_>>() },
            "values": seq.entries,
            "budget_exceeded_at": seq.budget_exceeded_at,
            "subadditive": subadditive,
        }),
    )
}

fn pisot(ctx: &Run, a: &PisotArgs) -> Result<Value> {
    let p = a.poly.as_deref().ok_or_else(|| usage("--poly is required"))?;
    let cert = certify_pisot(&poly(p)?)?;
    ctx.report(a, json!({ "certificate": cert }))
}

fn stationarity(ctx: &Run, a: &StationarityArgs) -> Result<Value> {
    if a.source.measure.is_none() {
        return Err(usage("stationarity needs --measure"));
    }
    let (samples, mu) = source(&a.source)?;
    let mu = mu.expect("measure source");
    let resample = a.resample.unwrap_or(samples.len() / 2);
    let r = stationarity_check(&mu, &samples, resample, a.source.sampling.seed)?;
    ctx.report(
        a,
        json!({ "measure": mu, "seed": a.source.sampling.seed, "stationarity": r }),
    )
}
