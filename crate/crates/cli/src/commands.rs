use std::path::PathBuf;

use clap::{Args, ValueEnum};
use ingnn::dse::{self, AccuracyOracle, CsvOracle, DseConstraints, Objective, SearchSpace, SyntheticOracle};
use ingnn::hwmodel::{dsp_estimate, ii_balance, latency_estimate, BalanceLimits};
use ingnn::inference::{self, load_samples, FixedArith, NodeReduction, NumericMode};
use ingnn::kernels::{aggregate_outer, dense_mmm, gather_b1_b2, reduction_report};
use ingnn::model::{ModelDescription, WeightsFile};
use ingnn::pipesim::{self, compare_architectures, ArchMode, PipelineArch, SimSettings};
use ingnn::{
    make_adjacency, synth, ColMatrix, Error, FixedSpec, FixedVal, GraphConfig, HwBudget, Matrix, MlpSet, Model,
    ParallelismConfig, PipelineDepths, Result,
};
use serde::Serialize;

use crate::output::OutDir;
use crate::ModelInput;

#[derive(Clone, Copy, ValueEnum)]
pub enum Reduction {
    Sum,
    Mean,
}

impl From<Reduction> for NodeReduction {
    fn from(r: Reduction) -> Self {
        match r {
            Reduction::Sum => NodeReduction::Sum,
            Reduction::Mean => NodeReduction::Mean,
        }
    }
}

#[derive(Args)]
pub struct InferArgs {
    #[command(flatten)]
    model: ModelInput,
    /// Samples JSON: one `{"i": [[...], ...]}` object or an array of them.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Number of synthetic samples when no samples file is given.
    #[arg(long, default_value_t = 8)]
    count: usize,
    /// Run in fixed point instead of f64.
    #[arg(long)]
    fixed: bool,
    #[arg(long, default_value = "Q12.12")]
    datapath: FixedSpec,
    /// Accumulator format; derived from the datapath when omitted.
    #[arg(long)]
    accumulator: Option<FixedSpec>,
    #[arg(long, value_enum, default_value = "sum")]
    reduction: Reduction,
    #[arg(short, long, default_value = "predictions.csv")]
    output: PathBuf,
}

fn load_model(input: &ModelInput, rng: &mut synth::SynthRng) -> Result<Model> {
    match (&input.model, &input.weights) {
        (Some(m), Some(w)) => {
            let arch = ModelDescription::load(m)?.architecture()?;
            Model::new(arch, WeightsFile::load(w)?.into_params()?)
        }
        _ => synth::random_model(rng),
    }
}

fn load_inputs(model: &Model, samples: &Option<PathBuf>, count: usize, rng: &mut synth::SynthRng) -> Result<Vec<Matrix>> {
    match samples {
        Some(path) => load_samples(path)?.iter().map(|s| s.matrix()).collect(),
        None => Ok(synth::random_inputs(model.arch.graph, count, rng)),
    }
}

fn fixed_arith(datapath: FixedSpec, accumulator: Option<FixedSpec>) -> Result<FixedArith> {
    match accumulator {
        Some(acc) => Ok(FixedArith::new(datapath, acc)),
        None => FixedArith::for_datapath(datapath),
    }
}

pub fn infer(a: InferArgs, out: &mut OutDir) -> Result<u8> {
    let mut rng = synth::rng(a.model.seed);
    let model = load_model(&a.model, &mut rng)?;
    let inputs = load_inputs(&model, &a.samples, a.count, &mut rng)?;
    if inputs.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let mode = if a.fixed { NumericMode::Fixed(fixed_arith(a.datapath, a.accumulator)?) } else { NumericMode::Real };
    let model = model.with_mode(mode).with_reduction(a.reduction.into());
    let predictions = model.forward_batch(&inputs)?;
    if let Some(bad) = predictions.iter().flat_map(|p| p.logits).find(|l| !l.is_finite()) {
        return Err(Error::NonFinite(bad));
    }
    out.write(&a.output, &inference::predictions_csv(&predictions))?;
    let mut counts = [0usize; ingnn::model::NUM_CLASSES];
    for p in &predictions {
        counts[p.argmax] += 1;
    }
    println!("{} samples, class counts {:?}", predictions.len(), counts);
    println!("wrote {}", a.output.display());
    Ok(0)
}

#[derive(Args)]
pub struct HwArgs {
    #[arg(long, default_value_t = 30)]
    n_o: usize,
    #[arg(long, default_value_t = 16)]
    p: usize,
    #[arg(long, default_value_t = 1)]
    r_fo: u32,
    #[arg(long, default_value_t = 1)]
    r_phio: u32,
    #[arg(long, default_value_t = 1)]
    ii_mult: u32,
    /// Clock frequency in MHz.
    #[arg(long, default_value_t = 200.0)]
    clock: f64,
    #[arg(long, default_value_t = 30)]
    dp_loop: u64,
    #[arg(long, default_value_t = 7)]
    dp_tail: u64,
}

impl HwArgs {
    fn graph(&self) -> Result<GraphConfig> {
        GraphConfig::new(self.n_o, self.p)
    }

    fn depths(&self) -> PipelineDepths {
        PipelineDepths { dp_loop: self.dp_loop, dp_tail: self.dp_tail }
    }

    fn par(&self, n_fr: u32) -> Result<ParallelismConfig> {
        ParallelismConfig::new(n_fr, self.r_fo, self.r_phio)?.with_ii_mult(self.ii_mult)
    }
}

#[derive(Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    hw: HwArgs,
    /// Edge-function instances; when omitted the balancer chooses parallelism.
    #[arg(long)]
    n_fr: Option<u32>,
    /// Available DSP blocks.
    #[arg(long, default_value_t = 12_288)]
    dsp: u64,
    /// Model description JSON; replaces --n-o, --p and the layer-size flags.
    #[arg(long)]
    model: Option<PathBuf>,
    /// f_R layer sizes; the last one is the edge feature width.
    #[arg(long, value_delimiter = ',', default_value = "8,8,8")]
    fr: Vec<usize>,
    /// f_O layer sizes; the last one is the node feature width.
    #[arg(long, value_delimiter = ',', default_value = "24,24,24")]
    fo: Vec<usize>,
    /// phi_O layer sizes; the last one must be 5.
    #[arg(long, value_delimiter = ',', default_value = "24,24,5")]
    phi: Vec<usize>,
    /// Largest reuse factor the balancer may use.
    #[arg(long, default_value_t = 64)]
    max_reuse: u32,
    /// Also write the estimate as a one-row CSV.
    #[arg(long)]
    csv: bool,
    #[arg(short, long, default_value = "estimate.json")]
    output: PathBuf,
}

#[derive(Serialize)]
struct EstimateReport {
    n_o: usize,
    p: usize,
    parallelism: ParallelismConfig,
    balanced: bool,
    resources: ingnn::hwmodel::ResourceEstimate,
    dsp_budget: u64,
    latency: ingnn::hwmodel::LatencyEstimate,
}

pub fn estimate(a: EstimateArgs, out: &mut OutDir) -> Result<u8> {
    let (graph, mlps) = match &a.model {
        Some(path) => {
            let arch = ModelDescription::load(path)?.architecture()?;
            (arch.graph, arch.mlps)
        }
        None => {
            let graph = a.hw.graph()?;
            (graph, MlpSet::from_sizes(graph, a.fr.clone(), a.fo.clone(), a.phi.clone())?)
        }
    };
    let budget = HwBudget::new(a.dsp, a.hw.clock)?;
    let (par, resources, balanced) = match a.n_fr {
        Some(n_fr) => {
            let par = a.hw.par(n_fr)?;
            let res = dsp_estimate(&mlps, &par, &budget);
            if !res.feasible {
                return Err(Error::Infeasible(format!("design needs {} DSPs, budget is {}", res.total, budget.dsp_total)));
            }
            (par, res, false)
        }
        None => {
            let limits = BalanceLimits { max_reuse: a.max_reuse, max_n_fr: None, ii_mult: a.hw.ii_mult };
            let b = ii_balance(&mlps, graph, &budget, &limits)?;
            (b.par, b.resources, true)
        }
    };
    let latency = latency_estimate(graph, &par, a.hw.depths(), &budget);
    let report = EstimateReport {
        n_o: graph.n_o(),
        p: graph.p(),
        parallelism: par,
        balanced,
        resources,
        dsp_budget: budget.dsp_total,
        latency,
    };
    out.write_json(&a.output, &report)?;
    if a.csv {
        let csv = format!(
            "n_o,n_fr,r_fo,r_phio,ii_mult,dsp,ii_loop,ii_cycles,ii_us,latency_cycles,latency_us\n{},{},{},{},{},{},{},{},{:.4},{},{:.4}\n",
            graph.n_o(),
            par.n_fr,
            par.r_fo,
            par.r_phio,
            par.ii_mult,
            report.resources.total,
            latency.ii_loop,
            latency.ii_model,
            latency.ii_us,
            latency.latency,
            latency.latency_us
        );
        out.write(a.output.with_extension("csv"), &csv)?;
    }
    println!(
        "N_fR={} R_fO={} R_phiO={}: II {} cycles ({:.4} us), latency {} cycles ({:.4} us), DSP {}/{}",
        par.n_fr,
        par.r_fo,
        par.r_phio,
        latency.ii_model,
        latency.ii_us,
        latency.latency,
        latency.latency_us,
        report.resources.total,
        budget.dsp_total
    );
    Ok(0)
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ArchChoice {
    All,
    Coarse,
    FusedEdgeNode,
    FullyFused,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    hw: HwArgs,
    #[arg(long, default_value_t = 10)]
    n_fr: u32,
    #[arg(long, value_enum, default_value = "all")]
    arch: ArchChoice,
    /// Handshake cycles per ping-pong boundary in the coarse pipelines.
    #[arg(long, default_value_t = pipesim::DEFAULT_HANDSHAKE)]
    handshake: u64,
    /// Back-to-back inferences to simulate (at least 3).
    #[arg(long, default_value_t = 4)]
    inferences: usize,
    /// Write the per-cycle event timeline of each simulated architecture.
    #[arg(long)]
    timeline: bool,
    #[arg(short, long, default_value = "simulate.csv")]
    output: PathBuf,
}

pub fn simulate(a: SimulateArgs, out: &mut OutDir) -> Result<u8> {
    let graph = a.hw.graph()?;
    let par = a.hw.par(a.n_fr)?;
    let budget = HwBudget::new(u64::MAX, a.hw.clock)?;
    let settings = SimSettings { depths: a.hw.depths(), handshake: a.handshake, inferences: a.inferences, ..SimSettings::default() };
    let modes: Vec<ArchMode> = match a.arch {
        ArchChoice::All => ArchMode::ALL.to_vec(),
        ArchChoice::Coarse => vec![ArchMode::Coarse],
        ArchChoice::FusedEdgeNode => vec![ArchMode::FusedEdgeNode],
        ArchChoice::FullyFused => vec![ArchMode::FullyFused],
    };
    let mut csv = String::from("mode,ii_cycles,ii_us,latency_cycles,latency_us,stall_cycles\n");
    for mode in modes {
        let arch = PipelineArch::build(mode, graph, &par, &settings);
        let r = pipesim::simulate(&arch, graph, &par, settings.inferences)?;
        let stalls: u64 = r.stages.iter().map(|s| s.stall_cycles).sum();
        csv.push_str(&format!(
            "{},{},{:.4},{},{:.4},{}\n",
            mode.as_str(),
            r.measured_ii,
            budget.cycles_to_us(r.measured_ii),
            r.measured_latency,
            budget.cycles_to_us(r.measured_latency),
            stalls
        ));
        println!(
            "{:<16} II {:>6} cycles ({:.4} us)  latency {:>6} cycles ({:.4} us)",
            mode.as_str(),
            r.measured_ii,
            budget.cycles_to_us(r.measured_ii),
            r.measured_latency,
            budget.cycles_to_us(r.measured_latency)
        );
        if a.timeline {
            let name = format!("timeline_{}.csv", mode.as_str());
            out.write(&name, &r.timeline_csv())?;
        }
    }
    if matches!(a.arch, ArchChoice::All) {
        let cmp = compare_architectures(graph, &par, &settings, &budget)?;
        println!("fused II exceeds coarse II: {}", cmp.fused_ii_exceeds_coarse);
    }
    out.write(&a.output, &csv)?;
    Ok(0)
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ObjectiveChoice {
    OptLatn,
    OptAcc,
}

#[derive(Args)]
pub struct DseArgs {
    /// Search-space JSON.
    #[arg(long)]
    space: PathBuf,
    /// Required latency in microseconds.
    #[arg(long, default_value_t = 1.0)]
    latn_r: f64,
    /// Candidates slower than alpha * latn-r are pruned before evaluation.
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long, default_value_t = 12_288)]
    dsp: u64,
    #[arg(long, default_value_t = 200.0)]
    clock: f64,
    #[arg(long, value_enum, default_value = "opt-latn")]
    objective: ObjectiveChoice,
    /// Measured accuracies as `config,accuracy` CSV; a synthetic surrogate is used otherwise.
    #[arg(long)]
    accuracy_csv: Option<PathBuf>,
    /// Prefix of the output files.
    #[arg(long, default_value = "dse")]
    prefix: String,
}

#[derive(Serialize)]
struct Selection<'a> {
    objective: &'a str,
    latn_r: f64,
    alpha: f64,
    dsp_budget: u64,
    accuracy_source: &'a str,
    design: &'a dse::DesignPoint,
}

pub fn dse(a: DseArgs, out: &mut OutDir) -> Result<u8> {
    let space = SearchSpace::load(&a.space)?;
    let csv_oracle = a.accuracy_csv.as_ref().map(CsvOracle::load).transpose()?;
    let objective = match a.objective {
        ObjectiveChoice::OptLatn => Objective::OptLatn,
        ObjectiveChoice::OptAcc => Objective::OptAcc,
    };
    let constraints = DseConstraints::new(a.latn_r, a.alpha, HwBudget::new(a.dsp, a.clock)?, objective)?;
    let (oracle, source): (&dyn AccuracyOracle, &str) = match &csv_oracle {
        Some(o) => (o, "csv"),
        None => (&SyntheticOracle, "synthetic"),
    };
    let points = dse::explore(&space, space.graph(), &constraints, oracle)?;
    out.write(format!("{}_points.csv", a.prefix), &dse::points_csv(&points))?;
    out.write(format!("{}_pareto.csv", a.prefix), &dse::points_csv(&dse::pareto_front(&points)))?;
    let unpruned = points.iter().filter(|p| !p.is_pruned()).count();
    println!("{} candidates, {} evaluated, {} pruned", points.len(), unpruned, points.len() - unpruned);
    let selected = dse::select(&points, &constraints)?;
    let name = match objective {
        Objective::OptLatn => "opt-latn",
        Objective::OptAcc => "opt-acc",
    };
    out.write_json(
        format!("{}_selected.json", a.prefix),
        &Selection {
            objective: name,
            latn_r: a.latn_r,
            alpha: a.alpha,
            dsp_budget: a.dsp,
            accuracy_source: source,
            design: selected,
        },
    )?;
    let lat = selected.latency.expect("selected points are estimated");
    println!(
        "{name}: {} latency {:.4} us, II {:.4} us, DSP {}, accuracy {:.4} ({source})",
        selected.config,
        lat.latency_us,
        lat.ii_us,
        selected.dsp().unwrap_or(0),
        selected.accuracy.unwrap_or(f64::NAN)
    );
    Ok(0)
}

#[derive(Args)]
pub struct ReduceArgs {
    #[arg(long, default_value_t = 30)]
    n_o: usize,
    #[arg(long, default_value_t = 8)]
    d_e: usize,
    #[arg(long, default_value_t = 16)]
    p: usize,
    #[arg(short, long, default_value = "reduction.csv")]
    output: PathBuf,
}

pub fn reduce_report(a: ReduceArgs, out: &mut OutDir) -> Result<u8> {
    if a.d_e == 0 {
        return Err(Error::Config("d_e must be positive".into()));
    }
    let report = reduction_report(GraphConfig::new(a.n_o, a.p)?, a.d_e);
    let csv = report.to_csv();
    out.write(&a.output, &csv)?;
    print!("{csv}");
    println!(
        "MMM3 additions kept: {} of {} ({:.2}%)",
        report.mmm3.custom_adds,
        report.mmm3.dense_adds,
        report.mmm3.addition_ratio_pct()
    );
    Ok(0)
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    model: ModelInput,
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    count: usize,
    /// Datapath formats to try.
    #[arg(long, value_delimiter = ',', default_value = "Q12.4,Q12.6,Q12.8,Q12.10,Q12.12,Q12.16")]
    specs: Vec<FixedSpec>,
    #[arg(short, long, default_value = "sweep.csv")]
    output: PathBuf,
}

pub fn quantize_sweep(a: SweepArgs, out: &mut OutDir) -> Result<u8> {
    let mut rng = synth::rng(a.model.seed);
    let model = load_model(&a.model, &mut rng)?;
    let inputs = load_inputs(&model, &a.samples, a.count, &mut rng)?;
    let rows = inference::quantization_sweep(&model, &inputs, &a.specs)?;
    out.write(&a.output, &inference::sweep_csv(&rows))?;
    for r in &rows {
        println!("{:<8} agreement {:.4}  max logit error {:.6}", r.spec.to_string(), r.agreement, r.max_logit_error);
    }
    Ok(0)
}

#[derive(Args)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random graphs per check.
    #[arg(long, default_value_t = 50)]
    cases: usize,
    #[arg(short, long, default_value = "selftest.csv")]
    output: PathBuf,
}

fn kernels_match_dense(seed: u64, cases: usize) -> Result<bool> {
    use rand::Rng;
    let mut rng = synth::rng(seed);
    for _ in 0..cases {
        let g = GraphConfig::new(rng.gen_range(2..=50), rng.gen_range(1..=16))?;
        let d_e = rng.gen_range(1..=16);
        let adj = make_adjacency(g);
        let i = synth::random_inputs(g, 1, &mut rng).remove(0);
        let (b1, b2) = gather_b1_b2(&i, &adj, &mut ())?;
        let rr = adj.materialize_rr(0.0, 1.0);
        if b1 != dense_mmm(&i, &rr, &mut ())? || b2 != dense_mmm(&i, &adj.materialize_rs(0.0, 1.0), &mut ())? {
            return Ok(false);
        }
        let data = (0..d_e * g.n_e()).map(|_| rng.gen_range(-8.0..8.0)).collect();
        let e: Matrix = ColMatrix::from_col_major(d_e, g.n_e(), data)?;
        let dense = dense_mmm(&e, &rr.transpose(), &mut ())?;
        let got = aggregate_outer(&e, &adj, &mut ())?;
        let close = got.as_slice().iter().zip(dense.as_slice()).all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));
        if !close {
            return Ok(false);
        }
        let ef = e.try_map(|x| ingnn::fixed::quantize(x, ingnn::Q16_16))?;
        let one = ingnn::fixed::quantize(1.0, ingnn::Q16_16)?;
        let rrf = adj.materialize_rr(FixedVal::zero(ingnn::Q16_16), one).transpose();
        if aggregate_outer(&ef, &adj, &mut ())? != dense_mmm(&ef, &rrf, &mut ())? {
            return Ok(false);
        }
    }
    Ok(true)
}

fn fixed_matches_real(seed: u64, cases: usize) -> Result<bool> {
    let mut rng = synth::rng(seed ^ 0x9e37_79b9);
    for _ in 0..cases {
        let model = synth::random_model(&mut rng)?;
        let xs = synth::separated_inputs(&model, 4, 0.1, 1000, &mut rng)?;
        if xs.is_empty() {
            continue;
        }
        let real = model.real_engine()?.forward_batch(&xs)?;
        let fixed = model.fixed_engine(FixedArith::default())?.forward_batch(&xs)?;
        if real.iter().zip(&fixed).any(|(r, f)| r.argmax != f.argmax) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn design_point_reproduced() -> Result<bool> {
    let g = GraphConfig::new(30, 16)?;
    let par = ParallelismConfig::new(10, 1, 1)?;
    let lat = latency_estimate(g, &par, PipelineDepths::default(), &HwBudget::U250);
    let sim = pipesim::simulate(&PipelineArch::fully_fused(g, &par, PipelineDepths::default()), g, &par, 4)?;
    Ok(lat.ii_model == 90 && lat.latency == 124 && sim.measured_ii == 90 && sim.measured_latency == 124)
}

fn reduction_reproduced() -> Result<bool> {
    let r = reduction_report(GraphConfig::new(30, 16)?, 8);
    Ok(r.mmm3.custom_adds == 6960 && format!("{:.1}", r.mmm3.iteration_reduction_pct()) == "96.7")
}

pub fn selftest(a: SelftestArgs, out: &mut OutDir) -> Result<u8> {
    let checks: [(&str, Result<bool>); 4] = [
        ("kernels_vs_dense", kernels_match_dense(a.seed, a.cases)),
        ("fixed_vs_real_argmax", fixed_matches_real(a.seed, a.cases)),
        ("latency_model_vs_simulator", design_point_reproduced()),
        ("operation_counts", reduction_reproduced()),
    ];
    let mut csv = String::from("check,status\n");
    let mut failed = 0;
    for (name, result) in checks {
        let ok = result?;
        failed += usize::from(!ok);
        let status = if ok { "ok" } else { "FAIL" };
        csv.push_str(&format!("{name},{status}\n"));
        println!("[{status}] {name}");
    }
    out.write(&a.output, &csv)?;
    Ok(if failed == 0 { 0 } else { 1 })
}
