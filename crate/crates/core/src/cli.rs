//! Command-line front end.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{
    embedding_pca, energy_volume_table, excess_energy, kabsch_rmsd, lower_convex_hull, match_structures,
    write_energy_volume_csv, write_hull_csv, write_pca_csv, HullPoint,
};
use crate::config::RunConfig;
use crate::elements::{atomic_number, format_composition, symbol, Composition};
use crate::error::{Error, Result};
use crate::generate::{fit_molar_volumes, generate, OptimizerRegistry};
use crate::io::extxyz::format_float;
use crate::io::{read_extxyz, read_structures, write_extxyz, Column, Frame};
use crate::noise::{make_training_sample, NoiseSpec};
use crate::potential::{checkpoint, CaceModel};
use crate::seeding;
use crate::structure::{Mat3, Structure};
use crate::train::{fit, init_model, random_check_structure, verify_derivatives, verify_invariances, CheckpointHook};

#[derive(Debug, Parser)]
#[command(
    name = "rmgen",
    version,
    about = "Learn a pseudo potential from noised equilibrium structures and search it for new ones"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; flags given on the command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in configuration to start from: diamond, molecules or materials.
    #[arg(long, global = true, conflicts_with = "config")]
    preset: Option<String>,
    /// Master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct NoiseFlags {
    /// Maximum displacement (Å).
    #[arg(long)]
    d_max: Option<f64>,
    /// Maximum strain component.
    #[arg(long)]
    gamma_max: Option<f64>,
    /// Noised copies per structure.
    #[arg(long)]
    n_noise: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write noised copies of structures with their pseudo force and stress targets.
    Perturb {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        noise: NoiseFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Train a potential on equilibrium structures.
    Train {
        #[arg(short, long)]
        input: PathBuf,
        /// Checkpoint file to write.
        #[arg(short, long)]
        output: PathBuf,
        /// Per-epoch loss log (CSV).
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        final_learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Weight of the stress term.
        #[arg(long)]
        beta: Option<f64>,
        #[command(flatten)]
        noise: NoiseFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Relax random structures on a trained potential.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 50)]
        n_samples: usize,
        /// Formula unit, e.g. C or Li2S.
        #[arg(long)]
        composition: Option<Composition>,
        /// Smallest and largest number of formula units.
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        formula_units: Option<Vec<usize>>,
        /// Molar volume range in Å³/atom.
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        molar_volume: Option<Vec<f64>>,
        /// Generate non-periodic molecules.
        #[arg(long)]
        molecule: bool,
        /// Structures used to fit per-element volumes.
        #[arg(long)]
        training_set: Option<PathBuf>,
        /// Energy-volume table (CSV).
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        optimizer: Option<String>,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        f_tol: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Match structures against references.
    Evaluate {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Match report (CSV).
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        tol_f: Option<f64>,
        #[arg(long)]
        tol_v: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Excess energies and the lower convex hull of a binary system.
    Hull {
        #[arg(short, long)]
        input: PathBuf,
        /// Endmember elements A and B; x is the fraction of A.
        #[arg(long, num_args = 2, value_names = ["A", "B"], required = true)]
        endmembers: Vec<String>,
        /// Evaluate energies with this potential instead of reading them from the input.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Principal components of the learned element embeddings.
    EmbedPca {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Finite-difference and symmetry self-checks.
    Verify {
        /// Check this potential; a fresh random one otherwise.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Elements of the fresh model.
        #[arg(long, default_value = "H,C,O", value_delimiter = ',')]
        elements: Vec<String>,
        #[arg(long, default_value_t = 10)]
        n_structures: usize,
        /// Random transforms per structure in the symmetry check.
        #[arg(long, default_value_t = 5)]
        n_transforms: usize,
        #[command(flatten)]
        common: Common,
    },
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(name)) => RunConfig::preset(name)?,
            (None, None) => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.train.seed = s;
        }
        Ok(cfg)
    }
}

impl NoiseFlags {
    fn apply(&self, spec: &mut NoiseSpec) {
        if let Some(v) = self.d_max {
            spec.d_max = v;
        }
        if let Some(v) = self.gamma_max {
            spec.gamma_max = v;
        }
        if let Some(v) = self.n_noise {
            spec.n_noise_per_structure = v;
        }
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn mat9(m: &Mat3) -> String {
    (0..9).map(|k| format_float(m[(k / 3, k % 3)])).collect::<Vec<_>>().join(" ")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn label(s: &Structure, k: usize) -> String {
    format!("{}#{k}", format_composition(&s.composition()))
}

/// Parses `args` (program name first) and runs the subcommand. Returns the
/// process exit code: 0 on success, 1 on failure, 2 on a usage error.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Perturb { input, output, noise, common } => {
            let mut cfg = common.load()?;
            noise.apply(&mut cfg.noise);
            cfg.noise.validate()?;
            perturb(&input, &output, &cfg)
        }
        Command::Train {
            input,
            output,
            log,
            epochs,
            learning_rate,
            final_learning_rate,
            batch_size,
            beta,
            noise,
            common,
        } => {
            let mut cfg = common.load()?;
            noise.apply(&mut cfg.noise);
            set(&mut cfg.train.epochs, epochs);
            if let Some(lr) = learning_rate {
                if final_learning_rate.is_none() && cfg.train.final_learning_rate == cfg.train.learning_rate {
                    cfg.train.final_learning_rate = lr;
                }
                cfg.train.learning_rate = lr;
            }
            set(&mut cfg.train.final_learning_rate, final_learning_rate);
            set(&mut cfg.train.batch_size, batch_size);
            set(&mut cfg.train.beta, beta);
            cfg.validate()?;
            train(&input, &output, log.as_deref(), &cfg)
        }
        Command::Generate {
            checkpoint: ckpt,
            output,
            n_samples,
            composition,
            formula_units,
            molar_volume,
            molecule,
            training_set,
            table,
            optimizer,
            max_steps,
            f_tol,
            common,
        } => {
            let mut cfg = common.load()?;
            let g = &mut cfg.generate;
            set(&mut g.composition, composition);
            if let Some(u) = formula_units {
                g.formula_units = [u[0], u[1]];
            }
            if let Some(v) = molar_volume {
                g.molar_volume_range = Some([v[0], v[1]]);
            }
            if molecule {
                g.pbc = false;
                g.relax_cell = false;
            }
            set(&mut g.optimizer, optimizer);
            set(&mut g.max_steps, max_steps);
            set(&mut g.f_tol, f_tol);
            cfg.validate()?;
            run_generate(&ckpt, &output, n_samples, training_set.as_deref(), table.as_deref(), &cfg)
        }
        Command::Evaluate { input, reference, output, tol_f, tol_v, common } => {
            let mut cfg = common.load()?;
            set(&mut cfg.matching.tol_f, tol_f);
            set(&mut cfg.matching.tol_v, tol_v);
            cfg.validate()?;
            evaluate(&input, &reference, &output, &cfg)
        }
        Command::Hull { input, endmembers, checkpoint: ckpt, output, common } => {
            common.load()?;
            hull(&input, &endmembers, ckpt.as_deref(), &output)
        }
        Command::EmbedPca { checkpoint: ckpt, output, common } => {
            common.load()?;
            let model = checkpoint::load(&ckpt)?;
            let rows: Vec<Vec<f64>> = (0..model.elements.len()).map(|i| model.embedding(i).to_vec()).collect();
            let pca = embedding_pca(&rows)?;
            write_pca_csv(create(&output)?, &model.elements, &pca)?;
            println!(
                "explained variance ratio: {}",
                pca.explained_ratio.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>().join(" ")
            );
            Ok(0)
        }
        Command::Verify { checkpoint: ckpt, elements, n_structures, n_transforms, common } => {
            let cfg = common.load()?;
            verify(ckpt.as_deref(), &elements, n_structures, n_transforms, &cfg)
        }
    }
}

fn perturb(input: &Path, output: &Path, cfg: &RunConfig) -> Result<i32> {
    let structures = read_structures(input)?;
    let seed = cfg.train.seed;
    let mut frames = Vec::new();
    for (i, s) in structures.iter().enumerate() {
        for k in 0..cfg.noise.n_noise_per_structure {
            let mut rng = seeding::stream(seed, &[i as u64, k as u64]);
            let t = make_training_sample(s, &cfg.noise, &mut rng)?;
            let mut f = Frame::new(t.noised).with("source", i).with("sample", k).with("strain", mat9(&t.strain));
            if f.structure.pbc() {
                f = f.with("target_stress", mat9(&t.target_stress));
            }
            f.columns.push(Column::reals("target_forces", &t.target_forces));
            f.columns.push(Column::reals("displacement", &t.displacements));
            frames.push(f);
        }
    }
    write_extxyz(output, &frames)?;
    println!("wrote {} noised samples to {}", frames.len(), output.display());
    Ok(0)
}

fn train(input: &Path, output: &Path, log: Option<&Path>, cfg: &RunConfig) -> Result<i32> {
    let dataset = read_structures(input)?;
    let model = init_model(&dataset, &cfg.model, cfg.train.seed)?;
    println!(
        "training {} parameters on {} structures for {} epochs",
        model.n_params(),
        dataset.len(),
        cfg.train.epochs
    );
    let mut save = |epoch: usize, m: &CaceModel| -> Result<()> {
        log::info!("epoch {epoch}: checkpoint written");
        checkpoint::save(m, output)
    };
    let hook: Option<CheckpointHook> = if cfg.train.checkpoint_interval > 0 { Some(&mut save) } else { None };
    let (model, report) = fit(model, &dataset, &cfg.noise, &cfg.train, hook)?;
    checkpoint::save(&model, output)?;
    if let Some(path) = log {
        report.write_csv(create(path)?)?;
    }
    if let Some(b) = report.best() {
        println!(
            "best epoch {}: validation loss {:.4e}, force rmse {:.4e} (mean target force {:.4e}), stress rmse {:.4e}",
            b.epoch,
            b.validation.loss,
            b.validation.force_rmse,
            b.validation.mean_target_force,
            b.validation.stress_rmse
        );
    }
    Ok(0)
}

fn run_generate(
    ckpt: &Path,
    output: &Path,
    n_samples: usize,
    training_set: Option<&Path>,
    table: Option<&Path>,
    cfg: &RunConfig,
) -> Result<i32> {
    let model = checkpoint::load(ckpt)?;
    for &(z, _) in &cfg.generate.composition.0 {
        if !model.elements.contains(&z) {
            return Err(Error::InvalidInput(format!(
                "element {} is not covered by the checkpoint",
                symbol(z).unwrap_or("?")
            )));
        }
    }
    let volumes = match training_set {
        Some(p) => Some(fit_molar_volumes(&read_structures(p)?)?),
        None => None,
    };
    let registry = OptimizerRegistry::with_defaults();
    let batch = generate(&model, &cfg.generate, volumes.as_deref(), n_samples, cfg.train.seed, &registry)?;
    let frames: Vec<Frame> = batch
        .results
        .iter()
        .map(|r| {
            Frame::new(r.structure.clone())
                .with("pseudo_energy", format_float(r.pseudo_energy))
                .with("pseudo_energy_per_atom", format_float(r.pseudo_energy_per_atom))
                .with("initial_pseudo_energy", format_float(r.initial_pseudo_energy))
                .with("converged", if r.converged { "T" } else { "F" })
                .with("steps", r.steps)
                .with("max_force", format_float(r.max_force_final))
                .with("seed", r.seed)
                .with("index", r.index)
        })
        .collect();
    write_extxyz(output, &frames)?;
    if let Some(path) = table {
        write_energy_volume_csv(create(path)?, &energy_volume_table(&batch.results))?;
    }
    for (i, s, msg) in &batch.failures {
        eprintln!("sample {i} (seed {s}) failed: {msg}");
    }
    let converged = batch.results.iter().filter(|r| r.converged).count();
    println!(
        "wrote {} structures to {} ({converged} converged, {} failed)",
        batch.results.len(),
        output.display(),
        batch.failures.len()
    );
    Ok(0)
}

fn evaluate(input: &Path, reference: &Path, output: &Path, cfg: &RunConfig) -> Result<i32> {
    let frames = read_extxyz(input)?;
    let refs = read_extxyz(reference)?;
    if refs.is_empty() {
        return Err(Error::InvalidInput(format!("{} holds no structures", reference.display())));
    }
    let mut w = create(output)?;
    writeln!(w, "index,label,n_atoms,energy_per_atom,molar_volume,best_reference,distance,matched,rmsd")?;
    let mut n_matched = 0;
    for (k, f) in frames.iter().enumerate() {
        let s = &f.structure;
        let mut best: Option<(usize, f64, bool)> = None;
        for (j, r) in refs.iter().enumerate() {
            let m = match_structures(s, &r.structure, &cfg.matching)?;
            if !m.composition_ok {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, d, matched)) => (m.matched && !matched) || (m.matched == matched && m.distance < d),
            };
            if better {
                best = Some((j, m.distance, m.matched));
            }
        }
        let rmsd = best
            .filter(|_| !s.pbc())
            .and_then(|(j, _, _)| kabsch_rmsd(s, &refs[j].structure, false).ok())
            .map(|r| format!("{r:.6}"))
            .unwrap_or_default();
        let (best_ref, distance, matched) = match best {
            Some((j, d, m)) => (label(&refs[j].structure, j), format!("{d:.6}"), m),
            None => (String::new(), "inf".into(), false),
        };
        n_matched += matched as usize;
        writeln!(
            w,
            "{k},{},{},{},{},{best_ref},{distance},{matched},{rmsd}",
            label(s, k),
            s.len(),
            f.info.get("pseudo_energy_per_atom").cloned().unwrap_or_default(),
            s.molar_volume().map(|v| format!("{v:.6}")).unwrap_or_default(),
        )?;
    }
    w.flush()?;
    println!("{n_matched} of {} structures match a reference", frames.len());
    Ok(0)
}

fn hull(input: &Path, endmembers: &[String], ckpt: Option<&Path>, output: &Path) -> Result<i32> {
    let (za, zb) = (atomic_number(&endmembers[0])?, atomic_number(&endmembers[1])?);
    if za == zb {
        return Err(Error::InvalidInput("endmembers must differ".into()));
    }
    let frames = read_extxyz(input)?;
    let model = ckpt.map(checkpoint::load).transpose()?;
    let mut rows = Vec::with_capacity(frames.len());
    for (k, f) in frames.iter().enumerate() {
        let s = &f.structure;
        if let Some(z) = s.species.iter().find(|&&z| z != za && z != zb) {
            return Err(Error::InvalidInput(format!(
                "structure {k} contains {}, which is not an endmember element",
                symbol(*z).unwrap_or("?")
            )));
        }
        let n = s.len() as f64;
        let e = match &model {
            Some(m) => m.total_energy(s)? / n,
            None => f
                .info_f64("pseudo_energy_per_atom")
                .or_else(|| f.info_f64("pseudo_energy").map(|e| e / n))
                .ok_or_else(|| Error::InvalidInput(format!("structure {k} has no pseudo_energy; pass --checkpoint")))?,
        };
        let x = s.species.iter().filter(|&&z| z == za).count() as f64 / n;
        rows.push((x, e, label(s, k)));
    }
    let lowest = |x: f64| {
        rows.iter().filter(|r| r.0 == x).map(|r| r.1).min_by(f64::total_cmp).ok_or_else(|| {
            Error::InvalidInput(format!(
                "no pure {} structure in the input",
                if x == 1.0 { &endmembers[0] } else { &endmembers[1] }
            ))
        })
    };
    let (e_a, e_b) = (lowest(1.0)?, lowest(0.0)?);
    let points: Vec<HullPoint> = rows
        .into_iter()
        .map(|(x, e, r)| HullPoint { x, e_ex: excess_energy(e, x, e_a, e_b), structure_ref: r })
        .collect();
    let h = lower_convex_hull(&points)?;
    write_hull_csv(create(output)?, &points, &h)?;
    let names: Vec<&str> = h.vertices.iter().map(|&i| points[i].structure_ref.as_str()).collect();
    println!("hull vertices: {}", names.join(" "));
    Ok(0)
}

fn verify(
    ckpt: Option<&Path>,
    elements: &[String],
    n_structures: usize,
    n_transforms: usize,
    cfg: &RunConfig,
) -> Result<i32> {
    let seed = cfg.train.seed;
    let model = match ckpt {
        Some(p) => checkpoint::load(p)?,
        None => {
            let mut z = elements.iter().map(|e| atomic_number(e)).collect::<Result<Vec<u8>>>()?;
            z.sort_unstable();
            z.dedup();
            CaceModel::new(cfg.model.clone(), &z, &mut seeding::stream(seed, &[0]))?
        }
    };
    let noise =
        NoiseSpec { d_max: cfg.noise.d_max.min(0.2), gamma_max: cfg.noise.gamma_max.min(0.05), ..cfg.noise.clone() };
    let mut ok = true;
    for k in 0..n_structures {
        let mut rng = seeding::stream(seed, &[1, k as u64]);
        let s = random_check_structure(&model.elements, k % 2 == 0, &mut rng)?;
        let sample = make_training_sample(&s, &noise, &mut rng)?;
        let d = verify_derivatives(&model, &sample, cfg.train.beta)?;
        let inv = verify_invariances(&model, &sample.noised, n_transforms, &mut rng)?;
        let pass = d.passed() && inv.passed();
        ok &= pass;
        println!(
            "{} {:>2} atoms pbc={} force {:.1e} stress {:.1e} gradient {:.1e} energy-invariance {:.1e} force-equivariance {:.1e} extensivity {:.1e}",
            if pass { "PASS" } else { "FAIL" },
            s.len(),
            s.pbc(),
            d.force_rel_err,
            d.stress_rel_err,
            d.gradient_rel_err,
            inv.energy_rel_err,
            inv.force_rel_err,
            inv.extensivity_rel_err
        );
    }
    println!("{}", if ok { "all checks passed" } else { "some checks failed" });
    Ok(if ok { 0 } else { 1 })
}
