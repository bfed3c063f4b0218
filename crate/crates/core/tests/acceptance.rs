//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.

#![allow(clippy::needless_range_loop)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use rmgen::analysis::{excess_energy, kabsch_rmsd, lower_convex_hull, match_structures, HullPoint};
use rmgen::config::RunConfig;
use rmgen::generate::{generate, Fire, Optimizer, OptimizerRegistry, RelaxSettings};
use rmgen::io::{format_extxyz, parse_extxyz, read_extxyz, write_extxyz, Column, Frame};
use rmgen::noise::{make_training_sample, repulsive_force_targets, NoiseSpec};
use rmgen::potential::{checkpoint, CaceHyper, CaceModel, Potential, QuadraticWell};
use rmgen::seeding::stream;
use rmgen::structure::{cubic_diamond, make_supercell, rotation_matrix, Mat3, Structure, Vec3};
use rmgen::train::{random_check_structure, train, verify_derivatives};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn run(id: u32, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    });
    println!(
        "[{}] {id}. {name}: {} ({:.1} s)",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        t.elapsed().as_secs_f64()
    );
    o.pass
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Mat3 {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let rho = (1.0 - z * z).sqrt();
    rotation_matrix(&Vec3::new(rho * phi.cos(), rho * phi.sin(), z), rng.random_range(0.0..std::f64::consts::TAU))
}

fn random_model(elements: &[u8], rng: &mut ChaCha8Rng) -> CaceModel {
    let hyper = CaceHyper {
        r_cut: rng.random_range(3.0..5.0),
        n_max: rng.random_range(2..=5),
        l_max: rng.random_range(1..=3),
        nu_max: rng.random_range(2..=3),
        n_embedding: rng.random_range(1..=3),
        hidden: if rng.random::<bool>() { vec![8] } else { vec![6, 6] },
    };
    CaceModel::new(hyper, elements, rng).unwrap()
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut worst = [0.0f64; 3];
    let mut failed = 0;
    let n = 20;
    for k in 0..n {
        let mut rng = stream(1, &[k]);
        let mut model = random_model(&[1, 6, 8], &mut rng);
        let s = random_check_structure(&model.elements, k % 2 == 0, &mut rng).unwrap();
        let spec = NoiseSpec { d_max: 0.2, gamma_max: 0.05, ..NoiseSpec::default() };
        let norm: Vec<Structure> = (0..4).map(|_| make_training_sample(&s, &spec, &mut rng).unwrap().noised).collect();
        model.fit_feature_normalization(&norm).unwrap();
        let sample = make_training_sample(&s, &spec, &mut rng).unwrap();
        let r = verify_derivatives(&model, &sample, rng.random_range(0.1..10.0)).unwrap();
        worst[0] = worst[0].max(r.force_rel_err);
        worst[1] = worst[1].max(r.stress_rel_err);
        worst[2] = worst[2].max(r.gradient_rel_err);
        failed += !(r.force_rel_err < 1e-5 && r.stress_rel_err < 1e-4 && r.gradient_rel_err < 1e-4) as usize;
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        failed == 0 && secs < 120.0,
        format!(
            "{n} structures, max rel err force {:.1e} (< 1e-5), stress {:.1e} (< 1e-4), gradient {:.1e} (< 1e-4), {secs:.0} s (< 120 s)",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let (mut de, mut df, mut dx) = (0.0f64, 0.0f64, 0.0f64);
    let mut count = 0;
    for k in 0..5u64 {
        let mut rng = stream(2, &[k]);
        let model = random_model(&[1, 6, 8], &mut rng);
        let s = random_check_structure(&model.elements, k % 2 == 0, &mut rng).unwrap();
        let r0 = model.compute(&s).unwrap();
        let fmax = r0.max_force_component();
        for _ in 0..10 {
            let rot = random_rotation(&mut rng);
            let shift =
                Vec3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            let mut perm: Vec<usize> = (0..s.len()).collect();
            perm.shuffle(&mut rng);
            let r = model.compute(&s.rotated(&rot).translated(&shift).permuted(&perm)).unwrap();
            de = de.max((r.energy - r0.energy).abs() / r0.energy.abs());
            for (a, &p) in perm.iter().enumerate() {
                df = df.max((r.forces[a] - rot * r0.forces[p]).amax() / fmax);
            }
            count += 1;
        }
        if s.pbc() {
            let e8 = model.total_energy(&make_supercell(&s, 2, 2, 2).unwrap()).unwrap();
            dx = dx.max((e8 - 8.0 * r0.energy).abs() / (8.0 * r0.energy).abs());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        de < 1e-9 && df < 1e-8 && dx < 1e-8 && secs < 60.0,
        format!(
            "{count} transforms, energy {de:.1e} (< 1e-9), forces {df:.1e} (< 1e-8), 2x2x2 extensivity {dx:.1e} (< 1e-8), {secs:.0} s (< 60 s)"
        ),
    )
}

/// Shortest `b − a` over image shifts in `{-3..3}³`.
fn brute_min_image(cell: &Mat3, a: &Vec3, b: &Vec3) -> Vec3 {
    let mut best = b - a;
    for i in -3..=3 {
        for j in -3..=3 {
            for k in -3..=3 {
                let d = b - a + cell.transpose() * Vec3::new(i as f64, j as f64, k as f64);
                if d.norm() < best.norm() {
                    best = d;
                }
            }
        }
    }
    best
}

/// Harmonic restoring force on centroid-free displacements plus all-pairs
/// repulsion `m (1 − r²/rc²)^n` summed over every image within `rc`.
fn oracle_targets(clean: &Structure, noised: &Structure, strain: &Mat3, spec: &NoiseSpec) -> Vec<Vec3> {
    let n = clean.len();
    let f = Mat3::identity() + strain;
    let mut disp: Vec<Vec3> = (0..n)
        .map(|i| {
            let r0 = f * clean.positions[i];
            match &noised.cell {
                Some(c) => brute_min_image(c, &r0, &noised.positions[i]),
                None => noised.positions[i] - r0,
            }
        })
        .collect();
    let centroid = disp.iter().sum::<Vec3>() / n as f64;
    disp.iter_mut().for_each(|d| *d -= centroid);
    let mut forces: Vec<Vec3> = disp.iter().map(|d| -spec.k * d).collect();
    let shifts: Vec<Vec3> = match &noised.cell {
        Some(c) => {
            let mut v = Vec::new();
            for i in -3..=3 {
                for j in -3..=3 {
                    for k in -3..=3 {
                        v.push(c.transpose() * Vec3::new(i as f64, j as f64, k as f64));
                    }
                }
            }
            v
        }
        None => vec![Vec3::zeros()],
    };
    let (m, p, rc) = (spec.rep_m, spec.rep_n as i32, spec.rep_rc);
    for i in 0..n {
        for j in 0..n {
            for t in &shifts {
                let d = noised.positions[i] - noised.positions[j] - t;
                let r = d.norm();
                if r == 0.0 || r >= rc {
                    continue;
                }
                let dg = -2.0 * p as f64 * m * r / (rc * rc) * (1.0 - r * r / (rc * rc)).powi(p - 1);
                forces[i] -= dg * d / r;
            }
        }
    }
    forces
}

fn criterion_3() -> Outcome {
    let mut worst = 0.0f64;
    let mut worst_stress = 0.0f64;
    let mut net = 0.0f64;
    let mut with_repulsion = 0;
    for k in 0..100u64 {
        let mut rng = stream(3, &[k]);
        let s = random_check_structure(&[1, 6, 8], k % 2 == 0, &mut rng).unwrap();
        let spec = NoiseSpec {
            d_max: rng.random_range(0.2..1.0),
            gamma_max: rng.random_range(0.0..0.15),
            k: rng.random_range(0.5..2.0),
            rep_m: rng.random_range(0.5..3.0),
            rep_n: rng.random_range(1..=4),
            rep_rc: rng.random_range(0.6..1.5),
            k_normal: rng.random_range(0.5..2.0),
            k_shear: rng.random_range(0.2..1.0),
            ..NoiseSpec::default()
        };
        let t = make_training_sample(&s, &spec, &mut rng).unwrap();
        let oracle = oracle_targets(&s, &t.noised, &t.strain, &spec);
        for (a, b) in t.target_forces.iter().zip(&oracle) {
            worst = worst.max((a - b).amax());
        }
        let sigma = Mat3::from_fn(|a, b| if a == b { -spec.k_normal } else { -spec.k_shear } * t.strain[(a, b)]);
        worst_stress = worst_stress.max((t.target_stress - sigma).amax());
        let rep = repulsive_force_targets(&t.noised, &spec.repulsion()).unwrap();
        with_repulsion += rep.iter().any(|f| f.norm() > 0.0) as usize;
        if !s.pbc() {
            net = net.max(rep.iter().sum::<Vec3>().amax());
            net = net.max(t.target_forces.iter().sum::<Vec3>().amax());
        }
    }
    outcome(
        worst < 1e-10 && worst_stress < 1e-10 && net < 1e-10 && with_repulsion > 10,
        format!(
            "100 cases ({with_repulsion} with repulsion), max force deviation {worst:.1e}, stress {worst_stress:.1e} (< 1e-10), molecular net force {net:.1e}"
        ),
    )
}

/// Converged relaxations collected for criterion 6: `(max force, f_tol)`.
type Converged = Vec<(f64, f64)>;

fn criterion_4(converged: &mut Converged) -> Outcome {
    let cfg = RunConfig::preset("diamond").unwrap();
    let diamond = cubic_diamond(6, (4.4f64 * 8.0).cbrt());
    let t = Instant::now();
    let (model, report) = train(std::slice::from_ref(&diamond), &cfg.noise, &cfg.model, &cfg.train).unwrap();
    let train_secs = t.elapsed().as_secs_f64();
    let best = report.best().unwrap();

    let fire = Fire::default();
    let settings = cfg.generate.relax_settings();
    let small = NoiseSpec { d_max: 0.3, gamma_max: 0.03, ..cfg.noise.clone() };
    let mut recovered = 0;
    for k in 0..10u64 {
        let noised = make_training_sample(&diamond, &small, &mut stream(4, &[k])).unwrap().noised;
        let r = fire.relax(&model, &noised, &settings).unwrap();
        if r.converged {
            converged.push((r.max_force, settings.f_tol));
        }
        recovered += match_structures(&r.structure, &diamond, &cfg.matching).unwrap().matched as usize;
    }

    let t = Instant::now();
    let batch = generate(&model, &cfg.generate, None, 50, 4, &OptimizerRegistry::with_defaults()).unwrap();
    let gen_secs = t.elapsed().as_secs_f64();
    let mut matches = 0;
    let mut best_match: Option<f64> = None;
    for r in &batch.results {
        if r.converged {
            converged.push((r.max_force_final, cfg.generate.f_tol));
        }
        if match_structures(&r.structure, &diamond, &cfg.matching).unwrap().matched {
            matches += 1;
            best_match.get_or_insert(r.structure.molar_volume().unwrap());
        }
    }
    let sizes_ok = batch.results.iter().all(|r| (2..=12).contains(&r.structure.len()));
    let vol_ok = best_match.is_some_and(|v| (v - 4.4).abs() <= 0.3);
    outcome(
        recovered >= 9 && batch.results.len() >= 50 && sizes_ok && matches >= 1 && vol_ok && train_secs < 3600.0 && gen_secs < 600.0,
        format!(
            "training {train_secs:.0} s (val force rmse {:.3}, mean target {:.3}); (a) {recovered}/10 noised copies recover diamond (>= 9); \
             (b) {} generations, {matches} diamond matches, lowest-energy match at {} A^3/atom (4.4 +- 0.3), generation {gen_secs:.0} s",
            best.validation.force_rmse,
            best.validation.mean_target_force,
            batch.results.len(),
            best_match.map(|v| format!("{v:.3}")).unwrap_or_else(|| "none".into()),
        ),
    )
}

fn molecule(atoms: &[(u8, [f64; 3])]) -> Structure {
    Structure::molecule(atoms.iter().map(|a| a.0).collect(), atoms.iter().map(|a| Vec3::from(a.1)).collect()).unwrap()
}

/// Water, ammonia, methane, carbon dioxide, hydrogen cyanide, formaldehyde,
/// acetylene, ethylene, methanol and staggered ethane.
fn toy_molecules() -> Vec<Structure> {
    let (h, c, n, o) = (1, 6, 7, 8);
    let t = 0.6291;
    let mut ethane = vec![(c, [0.0, 0.0, 0.768]), (c, [0.0, 0.0, -0.768])];
    for k in 0..3 {
        let a = k as f64 * std::f64::consts::TAU / 3.0;
        let b = a + std::f64::consts::PI / 3.0;
        ethane.push((h, [1.0186 * a.cos(), 1.0186 * a.sin(), 1.1573]));
        ethane.push((h, [1.0186 * b.cos(), 1.0186 * b.sin(), -1.1573]));
    }
    vec![
        molecule(&[(o, [0.0, 0.0, 0.0]), (h, [0.7572, 0.5865, 0.0]), (h, [-0.7572, 0.5865, 0.0])]),
        molecule(&[
            (n, [0.0, 0.0, 0.1162]),
            (h, [0.0, 0.9377, -0.2711]),
            (h, [0.8121, -0.4689, -0.2711]),
            (h, [-0.8121, -0.4689, -0.2711]),
        ]),
        molecule(&[(c, [0.0, 0.0, 0.0]), (h, [t, t, t]), (h, [-t, -t, t]), (h, [-t, t, -t]), (h, [t, -t, -t])]),
        molecule(&[(c, [0.0, 0.0, 0.0]), (o, [0.0, 0.0, 1.16]), (o, [0.0, 0.0, -1.16])]),
        molecule(&[(h, [0.0, 0.0, -1.066]), (c, [0.0, 0.0, 0.0]), (n, [0.0, 0.0, 1.156])]),
        molecule(&[
            (c, [0.0, 0.0, 0.0]),
            (o, [0.0, 0.0, 1.205]),
            (h, [0.0, 0.943, -0.587]),
            (h, [0.0, -0.943, -0.587]),
        ]),
        molecule(&[
            (c, [0.0, 0.0, 0.6013]),
            (c, [0.0, 0.0, -0.6013]),
            (h, [0.0, 0.0, 1.6644]),
            (h, [0.0, 0.0, -1.6644]),
        ]),
        molecule(&[
            (c, [0.0, 0.0, 0.6695]),
            (c, [0.0, 0.0, -0.6695]),
            (h, [0.0, 0.9289, 1.2321]),
            (h, [0.0, -0.9289, 1.2321]),
            (h, [0.0, 0.9289, -1.2321]),
            (h, [0.0, -0.9289, -1.2321]),
        ]),
        molecule(&[
            (c, [-0.0467, 0.6628, 0.0]),
            (o, [-0.0467, -0.757, 0.0]),
            (h, [-1.0863, 0.9776, 0.0]),
            (h, [0.4385, 1.0811, 0.8898]),
            (h, [0.4385, 1.0811, -0.8898]),
            (h, [0.8651, -1.0933, 0.0]),
        ]),
        molecule(&ethane),
    ]
}

fn criterion_5(converged: &mut Converged) -> Outcome {
    let cfg = RunConfig::preset("molecules").unwrap();
    let data = toy_molecules();
    let t = Instant::now();
    let (model, _) = train(&data, &cfg.noise, &cfg.model, &cfg.train).unwrap();
    let train_secs = t.elapsed().as_secs_f64();
    let test = NoiseSpec { d_max: 0.5 * cfg.noise.d_max, ..cfg.noise.clone() };
    let settings = cfg.generate.relax_settings();
    let fire = Fire::default();
    let mut ok = 0;
    let mut worst = 0.0f64;
    for trial in 0..50u64 {
        let src = &data[trial as usize % data.len()];
        let noised = make_training_sample(src, &test, &mut stream(5, &[trial])).unwrap().noised;
        let r = fire.relax(&model, &noised, &settings).unwrap();
        if r.converged {
            converged.push((r.max_force, settings.f_tol));
        }
        let rmsd = kabsch_rmsd(&r.structure, src, true).unwrap();
        worst = worst.max(rmsd);
        ok += (rmsd < 0.25) as usize;
    }
    outcome(
        ok >= 40,
        format!(
            "{} molecules, training d_max {} A ({train_secs:.0} s), test noise {} A: {ok}/50 relax to heavy-atom RMSD < 0.25 A (>= 40), worst {worst:.3} A",
            data.len(),
            cfg.noise.d_max,
            test.d_max
        ),
    )
}

fn criterion_6(converged: &Converged) -> Outcome {
    let mut rng = stream(6, &[]);
    let minimum: Vec<Vec3> = (0..6)
        .map(|_| Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
        .collect();
    let start: Vec<Vec3> = minimum
        .iter()
        .map(|m| m + Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)))
        .collect();
    let well = QuadraticWell::new(1.0, minimum.clone());
    let s = Structure::molecule(vec![6; 6], start).unwrap();
    let settings = RelaxSettings { f_tol: 1e-7, max_steps: 500, relax_cell: false, ..RelaxSettings::default() };
    let r = Fire::default().relax(&well, &s, &settings).unwrap();
    let dist = r.structure.positions.iter().zip(&minimum).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
    let violations = converged.iter().filter(|(f, tol)| !f.is_finite() || f >= tol).count();
    outcome(
        r.converged && r.steps < 500 && dist < 1e-6 && violations == 0 && !converged.is_empty(),
        format!(
            "quadratic well reached within {dist:.1e} A in {} steps (< 1e-6 A, < 500 steps); {} converged relaxations, {violations} with max force >= f_tol",
            r.steps,
            converged.len()
        ),
    )
}

/// Point `i` is on the lower hull unless some chord or point at the same x lies below it.
fn brute_on_hull(p: &[HullPoint], i: usize, tol: f64) -> bool {
    for j in 0..p.len() {
        for k in 0..p.len() {
            let (a, b) = (&p[j], &p[k]);
            if !(a.x <= p[i].x && p[i].x <= b.x) {
                continue;
            }
            let h =
                if a.x == b.x { a.e_ex.min(b.e_ex) } else { a.e_ex + (b.e_ex - a.e_ex) * (p[i].x - a.x) / (b.x - a.x) };
            if h < p[i].e_ex - tol {
                return false;
            }
        }
    }
    true
}

fn criterion_7() -> Outcome {
    let mut mismatches = 0;
    let mut endmember_err = 0.0f64;
    for k in 0..200u64 {
        let mut rng = stream(7, &[k]);
        let n = rng.random_range(3..=10usize);
        let grid = rng.random::<bool>();
        let raw: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let x = match i {
                    0 => 1.0,
                    1 => 0.0,
                    _ if grid => rng.random_range(0..=8) as f64 / 8.0,
                    _ => rng.random::<f64>(),
                };
                let e = if grid { rng.random_range(-8..=8) as f64 / 4.0 } else { rng.random_range(-2.0..2.0) };
                (x, e)
            })
            .collect();
        let lowest = |x: f64| raw.iter().filter(|r| r.0 == x).map(|r| r.1).fold(f64::INFINITY, f64::min);
        let (e_a, e_b) = (lowest(1.0), lowest(0.0));
        let points: Vec<HullPoint> = raw
            .iter()
            .enumerate()
            .map(|(i, &(x, e))| HullPoint { x, e_ex: excess_energy(e, x, e_a, e_b), structure_ref: i.to_string() })
            .collect();
        for p in &points {
            if (p.x == 1.0 && raw[p.structure_ref.parse::<usize>().unwrap()].1 == e_a)
                || (p.x == 0.0 && raw[p.structure_ref.parse::<usize>().unwrap()].1 == e_b)
            {
                endmember_err = endmember_err.max(p.e_ex.abs());
            }
        }
        let hull = lower_convex_hull(&points).unwrap();
        let tol = 1e-9;
        mismatches += (0..n).filter(|&i| hull.on_hull[i] != brute_on_hull(&points, i, tol)).count();
    }
    outcome(
        mismatches == 0 && endmember_err == 0.0,
        format!("200 instances, {mismatches} on-hull flags differ from the brute-force envelope, endmember |e_ex| max {endmember_err:e}"),
    )
}

fn random_frame(rng: &mut ChaCha8Rng, k: usize) -> Frame {
    let n = rng.random_range(1..=10usize);
    let species: Vec<u8> = (0..n).map(|_| rng.random_range(1..=118)).collect();
    let positions: Vec<Vec3> = (0..n)
        .map(|_| Vec3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)))
        .collect();
    let cell = rng
        .random::<bool>()
        .then(|| Mat3::from_fn(|a, b| if a == b { rng.random_range(3.0..15.0) } else { rng.random_range(-1.5..1.5) }));
    let s = Structure::new(species, positions, cell).unwrap();
    let mut f = Frame::new(s)
        .with("pseudo_energy", rng.random_range(-100.0..100.0))
        .with("converged", if rng.random::<bool>() { "T" } else { "F" })
        .with("steps", rng.random_range(0..2000))
        .with("seed", rng.random::<u64>())
        .with("note with space", format!("frame {k} \"quoted\""));
    let forces: Vec<Vec3> = (0..n).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
    f.columns.push(Column::reals("forces", &forces));
    f
}

fn criterion_8() -> Outcome {
    let mut rng = stream(8, &[]);
    let frames: Vec<Frame> = (0..1000).map(|k| random_frame(&mut rng, k)).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("frames.xyz");
    write_extxyz(&path, &frames).unwrap();
    let back = read_extxyz(&path).unwrap();
    let mut pos_err = 0.0f64;
    let mut cell_err = 0.0f64;
    let mut field_mismatch = back.len() != frames.len();
    for (a, b) in frames.iter().zip(&back) {
        let (sa, sb) = (&a.structure, &b.structure);
        field_mismatch |= sa.species != sb.species || sa.pbc() != sb.pbc() || a.info != b.info;
        field_mismatch |= a.columns.len() != b.columns.len() || a.columns[0].name != b.columns[0].name;
        for (p, q) in sa.positions.iter().zip(&sb.positions) {
            pos_err = pos_err.max((p - q).amax());
        }
        if let (Some(c), Some(d)) = (sa.cell, sb.cell) {
            cell_err = cell_err.max((c - d).amax());
        }
    }
    let stable = format_extxyz(&back) == format_extxyz(&parse_extxyz(&format_extxyz(&back)).unwrap());

    let identical = end_to_end_is_byte_identical(dir.path());
    outcome(
        !field_mismatch && pos_err < 1e-8 && cell_err < 1e-8 && stable && identical,
        format!(
            "1000 frames, positions {pos_err:.1e} A, cells {cell_err:.1e} A (< 1e-8), species/pbc/metadata {}; seeded train + generate byte-identical: {identical}",
            if field_mismatch { "differ" } else { "identical" }
        ),
    )
}

fn rmgen(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_rmgen")).args(args).output().map(|o| o.status.success()).unwrap_or(false)
}

fn end_to_end_is_byte_identical(dir: &Path) -> bool {
    let data = dir.join("diamond.xyz");
    write_extxyz(&data, &[Frame::new(cubic_diamond(6, 3.3))]).unwrap();
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let ckpt = p(&format!("model_{run}.json"));
        let out = p(&format!("gen_{run}.xyz"));
        let trained = rmgen(&[
            "train",
            "-i",
            &p("diamond.xyz"),
            "-o",
            &ckpt,
            "--preset",
            "diamond",
            "--epochs",
            "3",
            "--n-noise",
            "4",
            "--seed",
            "7",
        ]);
        let generated = rmgen(&[
            "generate",
            "--checkpoint",
            &ckpt,
            "-o",
            &out,
            "--preset",
            "diamond",
            "--n-samples",
            "6",
            "--formula-units",
            "2",
            "4",
            "--max-steps",
            "300",
            "--seed",
            "7",
        ]);
        if !(trained && generated) {
            return false;
        }
        outputs.push((std::fs::read(&ckpt).unwrap(), std::fs::read(&out).unwrap()));
    }
    let reference = checkpoint::load(Path::new(&p("model_a.json"))).is_ok();
    reference && outputs[0] == outputs[1] && !outputs[0].1.is_empty()
}

fn main() {
    let mut converged = Converged::new();
    let results = [
        run(1, "derivative stack", criterion_1),
        run(2, "symmetry suite", criterion_2),
        run(3, "target-model consistency", criterion_3),
        run(4, "one-shot diamond", || criterion_4(&mut converged)),
        run(5, "toy molecular denoising", || criterion_5(&mut converged)),
        run(6, "FIRE correctness", || criterion_6(&converged)),
        run(7, "hull correctness", criterion_7),
        run(8, "I/O round trip and determinism", criterion_8),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
