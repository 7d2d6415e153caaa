//! One runner per scenario task. Runners only compute; files are written by
//! the caller from the returned artifacts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use trajcomplete::comparison::{check_divergence, solve_dominating, verify_envelope};
use trajcomplete::dynamics::{energy_derivative_identity, energy_v, mechanical_energy};
use trajcomplete::gpw::{
    classify_gpw_completeness, completeness_map, full_geodesic_oracle, reduce_geodesic, write_map_csv,
};
use trajcomplete::hypotheses::{certify, check_bounded_below, check_dvdt_bound, check_s_bounds, TimeSign};
use trajcomplete::integrate::{integrate, refine_blowup};
use trajcomplete::{
    BoundData, ChartManifold, CompletenessCertificate, Direction, EnergyFrame, ForceSystem, GeodesicInitialData,
    Outcome, PhiFunction, Trajectory, Verdict,
};

use crate::error::{CliError, Result};
use crate::expr::Env;
use crate::report::{num, to_value, Report};
use crate::scenario::{DirectionSpec, InitialSpec, Model, Task};

pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

pub struct RunOutput {
    pub report: Report,
    pub artifacts: Vec<Artifact>,
}

pub fn execute(model: &Model) -> Result<RunOutput> {
    let rt = |source| CliError::Runtime {
        scenario: model.name.clone(),
        source,
    };
    let mut report = Report::new(&model.name, model.task.name());
    let artifacts = match model.task {
        Task::Integrate => run_integrate(model, &mut report).map_err(rt)?,
        Task::Certify => run_certify(model, &mut report).map_err(rt)?,
        Task::Envelope => run_envelope(model, &mut report).map_err(rt)?,
        Task::GpwGeodesic => run_gpw_geodesic(model, &mut report).map_err(rt)?,
        Task::GpwMap => run_gpw_map(model, &mut report).map_err(rt)?,
        Task::CompareLemma => run_compare_lemma(model, &mut report).map_err(rt)?,
    };
    report.set("artifacts", artifacts.iter().map(|a| Value::from(a.name.clone())).collect::<Vec<_>>());
    report.set("config", to_value(&model.scenario));
    Ok(RunOutput { report, artifacts })
}

type Run = trajcomplete::Result<Vec<Artifact>>;

fn outcome_value(o: &Outcome) -> Value {
    let mut v = json!({"label": o.label(), "code": o.code()});
    match o {
        Outcome::BlowUpSuspected { t_star } => v["t_star"] = num(*t_star),
        Outcome::ChartExit { t_exit } => v["t_exit"] = num(*t_exit),
        Outcome::ToleranceFailure { t } => v["t"] = num(*t),
        Outcome::HorizonReached => {}
    }
    v
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    write(&mut buf).expect("writing to memory");
    buf
}

fn suffixed(name: &str, suffix: &str) -> String {
    match name.rsplit_once('.') {
        Some((stem, ext)) => format!("{stem}_{suffix}.{ext}"),
        None => format!("{name}_{suffix}"),
    }
}

fn directions(spec: DirectionSpec) -> Vec<Direction> {
    match spec {
        DirectionSpec::Forward => vec![Direction::Forward],
        DirectionSpec::Backward => vec![Direction::Backward],
        DirectionSpec::Both => vec![Direction::Forward, Direction::Backward],
    }
}

fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::Forward => "forward",
        Direction::Backward => "backward",
    }
}

/// Largest deviation of `½g(ẋ,ẋ) + V` from its initial value, relative to the
/// largest `|½g(ẋ,ẋ)| + |V|` seen along the path.
fn energy_drift(m: &ChartManifold, fs: &ForceSystem, tr: &Trajectory) -> trajcomplete::Result<f64> {
    let e0 = mechanical_energy(m, fs, tr.first().t, &tr.first().x, &tr.first().xdot)?;
    let (mut worst, mut scale) = (0.0f64, e0.abs());
    for s in &tr.steps {
        let kinetic = 0.5 * m.norm_sq(&s.x, &s.xdot)?;
        let v = fs.potential(&s.x, s.t)?;
        worst = worst.max((kinetic + v - e0).abs());
        scale = scale.max(kinetic.abs() + v.abs());
    }
    Ok(worst / scale.max(f64::MIN_POSITIVE))
}

/// Integrates in each requested direction, bracketing blow-ups when asked.
fn trajectories(
    model: &Model,
    fs: &ForceSystem,
    init: &InitialSpec,
) -> trajcomplete::Result<Vec<(Trajectory, Value)>> {
    let m = &model.manifold;
    let mut out = Vec::new();
    for d in directions(init.direction) {
        let tr = integrate(m, fs, &init.x, &init.xdot, &model.cfg, d)?;
        let last = tr.last();
        let mut v = json!({
            "direction": direction_name(d),
            "outcome": outcome_value(&tr.outcome),
            "t_end": num(last.t),
            "accepted_steps": tr.stats.accepted,
            "rejected_steps": tr.stats.rejected,
            "rhs_evals": tr.stats.rhs_evals,
            "final_x": last.x.iter().map(|c| num(*c)).collect::<Vec<_>>(),
            "final_xdot": last.xdot.iter().map(|c| num(*c)).collect::<Vec<_>>(),
        });
        if model.conservative {
            let drift = energy_drift(m, fs, &tr)?;
            v["energy_drift"] = num(drift);
            v["energy_drift_per_unit_time"] = num(drift / last.t.abs().max(f64::MIN_POSITIVE));
        }
        if tr.outcome.is_blowup() && init.refine {
            let iv = refine_blowup(m, fs, &init.x, &init.xdot, &model.cfg, &tr)?;
            v["blowup"] = json!({
                "t_lo": num(iv.t_lo),
                "t_hi": num(iv.t_hi),
                "width": num(iv.width()),
                "nested": iv.nested,
                "levels": iv.levels.len(),
            });
        }
        out.push((tr, v));
    }
    Ok(out)
}

fn run_integrate(model: &Model, report: &mut Report) -> Run {
    let fs = model.forces.as_ref().expect("validated");
    let init = model.scenario.initial.as_ref().expect("validated");
    let runs = trajectories(model, fs, init)?;
    let labels: Vec<&str> = runs.iter().map(|(tr, _)| tr.outcome.label()).collect();
    report.set("outcome", labels.join(","));
    let csv = &model.scenario.output.csv;
    let many = runs.len() > 1;
    let mut artifacts = Vec::new();
    for (tr, _) in &runs {
        let name = if many {
            suffixed(csv, direction_name(tr.direction))
        } else {
            csv.clone()
        };
        artifacts.push(Artifact {
            name,
            bytes: csv_bytes(|b| tr.write_csv(b)),
        });
    }
    report.set("runs", runs.into_iter().map(|(_, v)| v).collect::<Vec<_>>());
    Ok(artifacts)
}

fn certificate_value(c: &CompletenessCertificate) -> Value {
    json!({
        "verdict": c.verdict.label(),
        "passing": c.passing.iter().map(|v| v.label()).collect::<Vec<_>>(),
        "caveat": c.caveat,
        "evidence": to_value(&c.evidence),
    })
}

/// Directions in which a verdict asserts completeness.
fn covers(v: Verdict, d: Direction) -> bool {
    match v {
        Verdict::CompleteByTheoremG01 | Verdict::CompleteByCorollary2 | Verdict::CompleteByCorollary3 => true,
        Verdict::ForwardCompleteByProp => d == Direction::Forward,
        Verdict::BackwardCompleteByProp => d == Direction::Backward,
        Verdict::Inconclusive => false,
    }
}

fn energy_frame(model: &Model, fs: &ForceSystem, bd: &BoundData) -> trajcomplete::Result<EnergyFrame> {
    let sb = check_s_bounds(&model.manifold, fs, bd)?;
    Ok(EnergyFrame::from_bounds(
        model.bounds_horizon,
        |t| (bd.alpha0)(t),
        |t| (bd.beta0)(t),
        &bd.t_grid,
        sb.n_two_sided,
    ))
}

fn frame_value(f: &EnergyFrame) -> Value {
    json!({
        "horizon": num(f.horizon),
        "a_t": num(f.a_t),
        "b_t": num(f.b_t),
        "n_t": num(f.n_t),
        "a_t_star": num(f.a_t_star),
    })
}

fn run_certify(model: &Model, report: &mut Report) -> Run {
    let bd = model.bounds.as_ref().expect("validated");
    let cert = match (&model.forces, &model.wave) {
        (Some(fs), _) => certify(&model.manifold, fs, bd, &model.claims)?,
        (None, Some(st)) => classify_gpw_completeness(st, bd, &model.anchor, &model.claims)?,
        (None, None) => unreachable!("validated"),
    };
    report.set("outcome", cert.verdict.label());
    report.set("certificate", certificate_value(&cert));
    let mut artifacts = Vec::new();
    if let Some(fs) = &model.forces {
        report.set("energy_frame", frame_value(&energy_frame(model, fs, bd)?));
        if let Some(init) = &model.scenario.initial {
            let runs = trajectories(model, fs, init)?;
            let conflicts: Vec<Value> = runs
                .iter()
                .filter(|(tr, _)| tr.outcome.is_blowup() && covers(cert.verdict, tr.direction))
                .map(|(tr, _)| Value::from(direction_name(tr.direction)))
                .collect();
            report.set(
                "probe",
                json!({
                    "runs": runs.iter().map(|(_, v)| v.clone()).collect::<Vec<_>>(),
                    "conflicts": conflicts,
                }),
            );
            for (tr, _) in &runs {
                artifacts.push(Artifact {
                    name: suffixed(&model.scenario.output.csv, direction_name(tr.direction)),
                    bytes: csv_bytes(|b| tr.write_csv(b)),
                });
            }
        }
    }
    Ok(artifacts)
}

/// Uniform sample from the closed ball of radius `r` about `c`.
fn ball(rng: &mut ChaCha8Rng, c: &[f64], r: f64) -> Vec<f64> {
    loop {
        let p: Vec<f64> = c.iter().map(|ci| ci + rng.gen_range(-r..=r)).collect();
        let d2: f64 = p.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 <= r * r {
            return p;
        }
    }
}

/// Derivative at interior node `i` from the nonuniform three-point formula.
fn three_point(t: &[f64], y: &[f64], i: usize) -> f64 {
    let (h0, h1) = (t[i] - t[i - 1], t[i + 1] - t[i]);
    (-h1 / (h0 * (h0 + h1))) * y[i - 1] + ((h1 - h0) / (h0 * h1)) * y[i] + (h0 / (h1 * (h0 + h1))) * y[i + 1]
}

fn run_envelope(model: &Model, report: &mut Report) -> Run {
    let m = &model.manifold;
    let fs = model.forces.as_ref().expect("validated");
    let bd = model.bounds.as_ref().expect("validated");
    let es = model.scenario.envelope.as_ref().expect("validated");
    let n = m.dim();
    let frame = energy_frame(model, fs, bd)?;
    let bounded = check_bounded_below(fs, bd)?;
    let dvdt = check_dvdt_bound(fs, bd, TimeSign::TwoSided, bounded.passed)?;
    report.set("energy_frame", frame_value(&frame));
    report.set("premises", json!([to_value(&bounded), to_value(&dvdt)]));

    let center = es.center.clone().unwrap_or_else(|| vec![0.0; n]);
    let mut rng = ChaCha8Rng::seed_from_u64(es.seed);
    let a_star = frame.a_t_star;
    let mut header: Vec<String> = vec!["sample".into()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("xdot{i}")));
    header.extend(["v0", "outcome", "envelope_margin", "fd_rel_error", "lemma_margin"].map(String::from));
    let mut csv = header.join(",") + "\n";

    let (mut worst_margin, mut worst_fd) = (f64::INFINITY, 0.0f64);
    let mut worst_lemma = f64::INFINITY;
    let (mut lemma_checked, mut lemma_ok) = (0usize, true);
    let mut incomplete = 0usize;
    for k in 0..es.samples {
        let p = loop {
            let p = ball(&mut rng, &center, es.radius);
            if m.contains(&p) {
                break p;
            }
        };
        let zero = vec![0.0; n];
        let q = ball(&mut rng, &zero, es.speed_radius);
        let tr = integrate(m, fs, &p, &q, &model.cfg, Direction::Forward)?;
        if tr.outcome != Outcome::HorizonReached {
            incomplete += 1;
        }
        let t: Vec<f64> = tr.times().collect();
        let v: Vec<f64> = tr
            .steps
            .iter()
            .map(|s| energy_v(m, fs, &frame, s.t, &s.x, &s.xdot))
            .collect::<trajcomplete::Result<_>>()?;
        // relative margin of v ≤ v(0) e^{A* t}
        let mut margin = f64::INFINITY;
        for (ti, vi) in t.iter().zip(&v) {
            let cap = v[0] * (a_star * ti).exp();
            margin = margin.min((cap - vi) / cap.abs().max(1.0));
        }
        let mut fd_err = 0.0f64;
        for i in 1..t.len().saturating_sub(1) {
            let s = &tr.steps[i];
            let exact = energy_derivative_identity(m, fs, s.t, &s.x, &s.xdot)?;
            let fd = three_point(&t, &v, i);
            fd_err = fd_err.max((fd - exact).abs() / exact.abs().max(v[i].abs()).max(f64::MIN_POSITIVE));
        }
        // the comparison lemma with φ(s) = A* s, where v stays positive
        let v_min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let mut lemma_margin = f64::NAN;
        if a_star > 0.0 && v_min > 0.0 && t.len() > 1 {
            let a = 0.5 * v_min.min(1.0);
            let phi = PhiFunction::new(a, move |s| a_star * s)?;
            let sol = solve_dominating(&phi, v[0], model.cfg.horizon)?;
            let rep = verify_envelope(&t, &v, &phi, &sol)?;
            lemma_checked += 1;
            lemma_ok &= rep.hypotheses_hold && rep.conclusion_holds;
            lemma_margin = rep.margin;
            worst_lemma = worst_lemma.min(rep.margin);
        }
        worst_margin = worst_margin.min(margin);
        worst_fd = worst_fd.max(fd_err);
        let mut row: Vec<String> = vec![k.to_string()];
        row.extend(p.iter().map(f64::to_string));
        row.extend(q.iter().map(f64::to_string));
        row.extend([
            v[0].to_string(),
            tr.outcome.code().to_string(),
            margin.to_string(),
            fd_err.to_string(),
            lemma_margin.to_string(),
        ]);
        csv.push_str(&(row.join(",") + "\n"));
    }
    let holds = worst_margin >= 0.0;
    let fd_ok = worst_fd < es.fd_tol;
    report.set(
        "outcome",
        if holds && fd_ok { "EnvelopeHolds" } else { "EnvelopeViolated" },
    );
    report.set(
        "envelope",
        json!({
            "samples": es.samples,
            "incomplete_runs": incomplete,
            "min_margin": num(worst_margin),
            "holds": holds,
            "max_fd_rel_error": num(worst_fd),
            "fd_tol": num(es.fd_tol),
            "fd_ok": fd_ok,
            "lemma_checked": lemma_checked,
            "lemma_holds": lemma_ok,
            "lemma_min_margin": num(worst_lemma),
        }),
    );
    Ok(vec![Artifact {
        name: model.scenario.output.csv.clone(),
        bytes: csv.into_bytes(),
    }])
}

fn run_gpw_geodesic(model: &Model, report: &mut Report) -> Run {
    let st = model.wave.as_ref().expect("validated");
    let g = model.scenario.geodesic.as_ref().expect("validated");
    let init = GeodesicInitialData {
        x0: g.x0.clone(),
        xdot0: g.xdot0.clone(),
        u0: g.u0,
        udot0: g.udot0,
        v0: g.v0,
        vdot0: g.vdot0,
    };
    let sg = reduce_geodesic(st, &init, &model.cfg)?;
    let last = sg.v.len() - 1;
    let (z, zd) = sg.state_at(last);
    report.set("outcome", sg.outcome.label());
    let mut result = json!({
        "outcome": outcome_value(&sg.outcome),
        "causal_character": to_value(&sg.causal_character()),
        "interval": num(sg.e_const),
        "interval_drift": num(sg.interval_drift(st)?),
        "accepted_steps": sg.base_trajectory.stats.accepted,
        "t_end": num(sg.base_trajectory.last().t),
        "final_z": z.iter().map(|c| num(*c)).collect::<Vec<_>>(),
        "final_zdot": zd.iter().map(|c| num(*c)).collect::<Vec<_>>(),
    });
    if g.oracle {
        let full = full_geodesic_oracle(st, &init, &model.cfg)?;
        let t_max = sg.base_trajectory.last().t.min(full.last().t);
        let mut worst = 0.0f64;
        for s in full.steps.iter().filter(|s| s.t <= t_max) {
            let (zr, _) = sg.sample(s.t)?;
            for (a, b) in zr.iter().zip(&s.x) {
                worst = worst.max((a - b).abs());
            }
        }
        result["oracle"] = json!({
            "outcome": outcome_value(&full.outcome),
            "compared_until": num(t_max),
            "max_discrepancy": num(worst),
        });
    }
    report.set("geodesic", result);
    Ok(vec![Artifact {
        name: model.scenario.output.csv.clone(),
        bytes: csv_bytes(|b| sg.write_csv(b)),
    }])
}

fn run_gpw_map(model: &Model, report: &mut Report) -> Run {
    let st = model.wave.as_ref().expect("validated");
    let ms = model.scenario.map.as_ref().expect("validated");
    let xs = BoundData::box_grid(&ms.x_lo, &ms.x_hi, ms.x_points);
    let xdots = BoundData::box_grid(&ms.xdot_lo, &ms.xdot_hi, ms.xdot_points);
    let mut inits = Vec::with_capacity(xs.len() * xdots.len() * ms.deltas.len());
    for &delta in &ms.deltas {
        for x in &xs {
            for xd in &xdots {
                inits.push(GeodesicInitialData {
                    x0: x.clone(),
                    xdot0: xd.clone(),
                    u0: ms.u0,
                    udot0: delta,
                    v0: ms.v0,
                    vdot0: ms.vdot0,
                });
            }
        }
    }
    let entries = completeness_map(st, &inits, &model.cfg)?;
    let mut counts = [0usize; 4];
    for e in &entries {
        counts[e.outcome.code() as usize] += 1;
    }
    let labels = ["HorizonReached", "BlowUpSuspected", "ChartExit", "ToleranceFailure"];
    let mut tally = serde_json::Map::new();
    for (l, c) in labels.iter().zip(counts) {
        tally.insert((*l).to_string(), c.into());
    }
    report.set("outcome", if counts[0] == entries.len() { "AllReachedHorizon" } else { "SomeIncomplete" });
    report.set("map", json!({"entries": entries.len(), "counts": tally}));
    if let Some(bd) = &model.bounds {
        let cert = classify_gpw_completeness(st, bd, &model.anchor, &model.claims)?;
        let conflict = cert.verdict != Verdict::Inconclusive && counts[1] > 0;
        report.set("certificate", certificate_value(&cert));
        report.set("conflict", conflict);
    }
    Ok(vec![Artifact {
        name: model.scenario.output.csv.clone(),
        bytes: csv_bytes(|b| write_map_csv(&entries, b)),
    }])
}

fn run_compare_lemma(model: &Model, report: &mut Report) -> Run {
    let phi = model.phi.as_ref().expect("validated");
    let ls = model.scenario.lemma.as_ref().expect("validated");
    let verdict = check_divergence(phi);
    report.set(
        "outcome",
        match verdict {
            trajcomplete::DivergenceVerdict::Diverges { .. } => "Diverges",
            trajcomplete::DivergenceVerdict::Converges { .. } => "Converges",
            trajcomplete::DivergenceVerdict::Inconclusive { .. } => "Inconclusive",
        },
    );
    report.set("divergence", to_value(&verdict));
    if !verdict.diverges() {
        report.set("dominating", Value::Null);
        return Ok(Vec::new());
    }
    let sol = solve_dominating(phi, ls.v0, ls.t_max)?;
    let mut csv = String::from(if model.reference.is_some() { "t,v0,dv0,reference\n" } else { "t,v0,dv0\n" });
    let (mut abs_err, mut rel_err) = (0.0f64, 0.0f64);
    for i in 0..ls.samples {
        let t = ls.t_max * i as f64 / (ls.samples - 1) as f64;
        let (w, dw) = (sol.value(t)?, sol.derivative(t)?);
        let mut row = format!("{t},{w},{dw}");
        if let Some(r) = &model.reference {
            let exact = r.eval(&Env { t, ..Default::default() });
            abs_err = abs_err.max((w - exact).abs());
            rel_err = rel_err.max((w - exact).abs() / exact.abs().max(f64::MIN_POSITIVE));
            row.push_str(&format!(",{exact}"));
        }
        csv.push_str(&row);
        csv.push('\n');
    }
    let mut dom = json!({
        "initial": num(sol.initial()),
        "t_max": num(ls.t_max),
        "value_at_t_max": num(sol.value(ls.t_max)?),
        "samples": ls.samples,
    });
    if model.reference.is_some() {
        dom["max_abs_error"] = num(abs_err);
        dom["max_rel_error"] = num(rel_err);
    }
    report.set("dominating", dom);
    Ok(vec![Artifact {
        name: model.scenario.output.csv.clone(),
        bytes: csv.into_bytes(),
    }])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn helpers() {
        assert_eq!(suffixed("trajectory.csv", "forward"), "trajectory_forward.csv");
        assert_eq!(suffixed("out", "backward"), "out_backward");
        let t = [0.0, 0.1, 0.3];
        let y: Vec<f64> = t.iter().map(|s| s * s).collect();
        assert!((three_point(&t, &y, 1) - 0.2).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let p = ball(&mut rng, &[1.0, -1.0], 0.5);
            assert!(((p[0] - 1.0).powi(2) + (p[1] + 1.0).powi(2)).sqrt() <= 0.5);
        }
        assert!(covers(Verdict::ForwardCompleteByProp, Direction::Forward));
        assert!(!covers(Verdict::ForwardCompleteByProp, Direction::Backward));
        assert!(!covers(Verdict::Inconclusive, Direction::Forward));
    }
}
