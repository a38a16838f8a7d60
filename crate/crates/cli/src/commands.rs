use std::io::Write;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use cpsr::analytic::{self, Normalization};
use cpsr::bloch::{self, SimulationSettings, SpatialMode};
use cpsr::lineshape::{self, CpsrFit, HyperfineLineList};
use cpsr::scenarios::{self, Model, Scenario};
use cpsr::units::{hz_to_rad, rad_to_hz};
use cpsr::{config, params, report, BeamConfig, CellConfig, DerivedRates, Spectrum};

use crate::table::{self, cell_text, num};
use crate::{Command, ModeChoice, ModelArgs, ModelChoice, Source};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Params { source } => params_cmd(&source),
        Command::Spectrum {
            source,
            grid,
            model,
            absolute,
            noise,
            seed,
            output,
        } => {
            let (scenario, cell, beam) = load(&source)?;
            let rates = derive(&cell, &beam)?;
            let grid = match grid {
                Some(g) => grid_from_args(&g)?,
                None => match scenario {
                    Some(s) => s.grid()?,
                    None => scenarios::default_grid(&rates),
                },
            };
            let noise = (noise > 0.0).then_some((noise, seed));
            let mut out = table::sink(output.output.as_deref())?;
            spectrum_csv(&mut out, &rates, &grid, &model, absolute, noise).map(|_| ())
        }
        Command::Sweep {
            source,
            param,
            values,
            range,
            model,
            output,
        } => {
            let (_, cell, beam) = load(&source)?;
            let values = match (values, range) {
                (Some(v), None) => v,
                (None, Some(r)) => sweep_range(&r)?,
                _ => bail!("give the sweep values with --values or --range"),
            };
            ensure!(!values.is_empty(), "the sweep has no values");
            let mut out = table::sink(output.output.as_deref())?;
            sweep_cmd(&mut out, &cell, &beam, &param, &values, &model)
        }
        Command::FitLine { input } => fit_line_cmd(&input),
        Command::FitAbsorption { input, species, lines } => fit_absorption_cmd(&input, &species, lines.as_deref()),
        Command::Scenario {
            name,
            model,
            print_config,
            output,
        } => {
            let scenario = scenarios::builtin(&name)?;
            let mut out = table::sink(output.output.as_deref())?;
            if print_config {
                out.write_all(config::to_config_text(&scenario.cell, &scenario.beam)?.as_bytes())?;
                out.flush()?;
                return Ok(());
            }
            scenario_cmd(&mut out, &scenario, &model)
        }
    }
}

fn load(source: &Source) -> Result<(Option<Scenario>, CellConfig, BeamConfig)> {
    match (&source.config, &source.scenario) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let (cell, beam) = config::parse_config(&text).with_context(|| format!("in {}", path.display()))?;
            Ok((None, cell, beam))
        }
        (None, Some(name)) => {
            let s = scenarios::builtin(name)?;
            let (cell, beam) = (s.cell.clone(), s.beam.clone());
            Ok((Some(s), cell, beam))
        }
        _ => bail!("give exactly one of --config or --scenario"),
    }
}

fn derive(cell: &CellConfig, beam: &BeamConfig) -> Result<DerivedRates> {
    let rates = params::derive_all(cell, beam)?;
    for warning in rates.validity_warnings(beam) {
        log::warn!("{warning}");
    }
    Ok(rates)
}

fn point_count(n: f64) -> Result<usize> {
    ensure!(
        n.fract() == 0.0 && n >= 2.0,
        "point count must be an integer >= 2, got {n}"
    );
    Ok(n as usize)
}

fn grid_from_args(g: &[f64]) -> Result<Vec<f64>> {
    let (min, max, n) = (g[0], g[1], point_count(g[2])?);
    ensure!(min < max, "grid minimum {min} must be below maximum {max}");
    Ok(analytic::linspace(hz_to_rad(min), hz_to_rad(max), n))
}

fn sweep_range(r: &[f64]) -> Result<Vec<f64>> {
    let n = point_count(r[2])?;
    Ok(analytic::linspace(r[0], r[1], n))
}

fn settings(args: &ModelArgs) -> Result<SimulationSettings> {
    let mode = match args.mode {
        ModeChoice::Uniform => SpatialMode::Uniform,
        ModeChoice::Spatial => {
            ensure!(args.cells >= 1, "--cells must be at least 1");
            SpatialMode::Spatial { cells: args.cells }
        }
    };
    Ok(SimulationSettings {
        mode,
        probe_pumping: !args.no_probe_pumping,
        ..Default::default()
    })
}

fn models(choice: ModelChoice) -> Vec<Model> {
    match choice {
        ModelChoice::Analytic => vec![Model::Analytic],
        ModelChoice::Detailed => vec![Model::Detailed],
        ModelChoice::Both => vec![Model::Analytic, Model::Detailed],
    }
}

fn params_cmd(source: &Source) -> Result<()> {
    let (_, cell, beam) = load(source)?;
    let rates = derive(&cell, &beam)?;
    let mut out = table::sink(None)?;
    out.write_all(report::params_report(&cell, &beam, &rates)?.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn compute_spectra(
    rates: &DerivedRates,
    grid: &[f64],
    args: &ModelArgs,
    absolute: bool,
) -> Result<Vec<(Model, Spectrum)>> {
    let settings = settings(args)?;
    models(args.model)
        .into_iter()
        .map(|model| {
            let s = match (model, absolute) {
                (Model::Analytic, true) => analytic::spectrum_with(grid, rates, Normalization::Absolute)?,
                (Model::Detailed, true) => {
                    let s = bloch::simulate_spectrum_for(rates, grid, &settings)?;
                    let scale = rates.attenuation();
                    Spectrum::new(
                        s.points()
                            .iter()
                            .map(|p| cpsr::SpectrumPoint {
                                omega: p.omega,
                                transmission: p.transmission * scale,
                            })
                            .collect(),
                        Some(rates.clone()),
                    )?
                }
                (m, false) => scenarios::model_spectrum(rates, grid, m, &settings)?,
            };
            Ok((model, s))
        })
        .collect()
}

fn spectrum_csv(
    out: &mut dyn Write,
    rates: &DerivedRates,
    grid: &[f64],
    args: &ModelArgs,
    absolute: bool,
    noise: Option<(f64, u64)>,
) -> Result<Vec<(Model, Spectrum)>> {
    let mut spectra = compute_spectra(rates, grid, args, absolute)?;
    if let Some((sigma, seed)) = noise {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma)?;
        for (_, s) in &mut spectra {
            let points = s
                .points()
                .iter()
                .map(|p| cpsr::SpectrumPoint {
                    omega: p.omega,
                    transmission: p.transmission * (1.0 + normal.sample(&mut rng)),
                })
                .collect();
            *s = Spectrum::new(points, s.rates().cloned())?;
        }
    }
    let both = spectra.len() > 1;
    let mut header = vec!["omega_hz".to_string()];
    for (model, _) in &spectra {
        for col in ["re_t", "im_t", "abs_t", "phase_deg"] {
            header.push(if both {
                format!("{col}_{model}")
            } else {
                col.to_string()
            });
        }
    }
    let rows: Vec<Vec<String>> = (0..grid.len())
        .map(|k| {
            let mut row = vec![num(rad_to_hz(grid[k]))];
            for (_, s) in &spectra {
                let t: Complex64 = s.points()[k].transmission;
                row.extend([num(t.re), num(t.im), num(t.norm()), num(t.arg().to_degrees())]);
            }
            row
        })
        .collect();
    table::write_csv(out, &header, &rows)?;
    Ok(spectra)
}

const FIT_COLUMNS: &[&str] = &[
    "absorption_center_hz",
    "gain_center_hz",
    "fwhm_hz",
    "raw_fwhm_absorption_hz",
    "raw_fwhm_gain_hz",
    "contrast",
    "extremum_contrast_absorption",
    "extremum_contrast_gain",
    "coupling_hz",
    "omega_a_fit_hz",
    "gamma_hz",
    "baseline",
    "fit_residual",
    "status",
];

fn fit_columns(fit: &cpsr::Result<CpsrFit>) -> Vec<String> {
    match fit {
        Ok(f) => vec![
            num(rad_to_hz(f.absorption.center)),
            num(rad_to_hz(f.gain.center)),
            num(rad_to_hz(f.absorption.fwhm)),
            f.absorption.raw_fwhm.map_or("nan".into(), |w| num(rad_to_hz(w))),
            f.gain.raw_fwhm.map_or("nan".into(), |w| num(rad_to_hz(w))),
            num(f.absorption.contrast),
            num(f.absorption.extremum_contrast),
            num(f.gain.extremum_contrast),
            num(rad_to_hz(f.coupling)),
            num(rad_to_hz(f.omega_a)),
            num(rad_to_hz(f.gamma)),
            num(f.baseline),
            num(f.residual),
            "ok".into(),
        ],
        Err(e) => {
            let mut row = vec!["nan".to_string(); FIT_COLUMNS.len() - 1];
            row.push(cell_text(&format!("error: {e}")));
            row
        }
    }
}

fn derived_header() -> Vec<String> {
    let r = scenarios::builtin("rb_fig2")
        .and_then(|s| s.derive())
        .expect("bundled scenario derives");
    report::derived_fields(&r)
        .into_iter()
        .map(|(name, _, _)| format!("derived_{name}"))
        .collect()
}

fn derived_columns(rates: &DerivedRates) -> Vec<String> {
    report::derived_fields(rates)
        .into_iter()
        .map(|(_, v, _)| num(v))
        .collect()
}

fn sweep_cmd(
    out: &mut dyn Write,
    cell: &CellConfig,
    beam: &BeamConfig,
    param: &str,
    values: &[f64],
    args: &ModelArgs,
) -> Result<()> {
    ensure!(
        config::numeric_keys().any(|k| k == param),
        "unknown sweep parameter `{param}` (valid: {})",
        config::numeric_keys().collect::<Vec<_>>().join(", ")
    );
    let settings = settings(args)?;
    let configs = values
        .iter()
        .map(|&v| {
            let (mut c, mut b) = (cell.clone(), beam.clone());
            config::set_key(&mut c, &mut b, param, v)?;
            derive(&c, &b)
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, Model)> = (0..values.len())
        .flat_map(|k| models(args.model).into_iter().map(move |m| (k, m)))
        .collect();
    let rows: Vec<Vec<String>> = jobs
        .par_iter()
        .map(|&(k, model)| {
            let rates = &configs[k];
            let fit = scenarios::model_spectrum(rates, &scenarios::default_grid(rates), model, &settings)
                .and_then(|s| lineshape::fit_cpsr_line(&s));
            if let Err(e) = &fit {
                log::warn!("{param} = {}: {e}", values[k]);
            }
            let mut row = vec![num(values[k]), model.to_string()];
            row.extend(fit_columns(&fit));
            row.extend(derived_columns(rates));
            row
        })
        .collect();
    let mut header = vec![param.to_string(), "model".to_string()];
    header.extend(FIT_COLUMNS.iter().map(|s| s.to_string()));
    header.extend(derived_header());
    table::write_csv(out, &header, &rows)
}

fn fit_line_cmd(input: &Path) -> Result<()> {
    let data = table::read_two_columns(input)?;
    let omegas: Vec<f64> = data.iter().map(|d| hz_to_rad(d.0)).collect();
    let mags: Vec<f64> = data.iter().map(|d| d.1).collect();
    let fit = lineshape::fit_cpsr_magnitude(&omegas, &mags)?;
    let [e_c, e_w, e_g, e_b] = fit.std_errors;
    let mut out = table::sink(None)?;
    writeln!(
        out,
        "coupling_hz = {} +- {}",
        num(rad_to_hz(fit.coupling)),
        num(rad_to_hz(e_c))
    )?;
    writeln!(
        out,
        "omega_a_hz = {} +- {}",
        num(rad_to_hz(fit.omega_a)),
        num(rad_to_hz(e_w))
    )?;
    writeln!(
        out,
        "gamma_hz = {} +- {}",
        num(rad_to_hz(fit.gamma)),
        num(rad_to_hz(e_g))
    )?;
    writeln!(out, "baseline = {} +- {}", num(fit.baseline), num(e_b))?;
    writeln!(
        out,
        "fwhm_hz = {} +- {}",
        num(rad_to_hz(fit.absorption.fwhm)),
        num(rad_to_hz(2.0 * e_g))
    )?;
    writeln!(out, "resonance_hz = {}", num(rad_to_hz(fit.resonance_frequency())))?;
    for line in [fit.absorption, fit.gain] {
        let kind = if line.is_gain { "gain" } else { "absorption" };
        writeln!(out, "{kind}_center_hz = {}", num(rad_to_hz(line.center)))?;
        writeln!(out, "{kind}_extremum_contrast = {}", num(line.extremum_contrast))?;
        match line.raw_fwhm {
            Some(w) => writeln!(out, "{kind}_raw_fwhm_hz = {}", num(rad_to_hz(w)))?,
            None => writeln!(out, "{kind}_raw_fwhm_hz = nan")?,
        }
    }
    writeln!(out, "contrast = {}", num(fit.absorption.contrast))?;
    writeln!(out, "fit_residual = {}", num(fit.residual))?;
    writeln!(out, "iterations = {}", fit.iterations)?;
    out.flush()?;
    Ok(())
}

fn fit_absorption_cmd(input: &Path, species: &str, lines: Option<&Path>) -> Result<()> {
    let lines = match lines {
        Some(path) => std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?
            .parse::<HyperfineLineList>()
            .with_context(|| format!("in {}", path.display()))?,
        None => HyperfineLineList::for_species(species.parse()?),
    };
    let data = table::read_two_columns(input)?;
    let fit = lineshape::fit_one_photon(&data, &lines)?;
    let [[v_od, c], [_, v_g]] = fit.covariance;
    let mut out = table::sink(None)?;
    writeln!(out, "od = {} +- {}", num(fit.od), num(v_od.max(0.0).sqrt()))?;
    writeln!(
        out,
        "gamma_opt_ghz = {} +- {}",
        num(fit.gamma_opt),
        num(v_g.max(0.0).sqrt())
    )?;
    writeln!(out, "correlation = {}", num(c / (v_od * v_g).sqrt()))?;
    writeln!(out, "p_ref = {}", num(fit.p_ref))?;
    writeln!(out, "fit_residual = {}", num(fit.residual))?;
    writeln!(out, "iterations = {}", fit.iterations)?;
    out.flush()?;
    Ok(())
}

fn scenario_cmd(out: &mut dyn Write, scenario: &Scenario, args: &ModelArgs) -> Result<()> {
    let settings = settings(args)?;
    let rates = derive(&scenario.cell, &scenario.beam)?;
    let Some(sweep) = &scenario.sweep else {
        let spectra = spectrum_csv(out, &rates, &scenario.grid()?, args, false, None)?;
        for (model, s) in spectra {
            match lineshape::fit_cpsr_line(&s) {
                Ok(fit) => eprintln!(
                    "{model}: centers {} / {} Hz, FWHM {} Hz, contrast {} (extremum {} / {}), residual {}",
                    num(rad_to_hz(fit.absorption.center)),
                    num(rad_to_hz(fit.gain.center)),
                    num(rad_to_hz(fit.absorption.fwhm)),
                    num(fit.absorption.contrast),
                    num(fit.absorption.extremum_contrast),
                    num(fit.gain.extremum_contrast),
                    num(fit.residual),
                ),
                Err(e) => eprintln!("{model}: line fit failed: {e}"),
            }
        }
        return Ok(());
    };
    match sweep.key.as_str() {
        "omega_a_hz" => {
            let omegas: Vec<f64> = sweep.values.iter().map(|&v| hz_to_rad(v)).collect();
            let mut header = vec!["model".to_string(), "omega_a_hz".to_string()];
            header.extend(FIT_COLUMNS.iter().map(|s| s.to_string()));
            header.extend(derived_header());
            let mut rows = Vec::new();
            for model in models(args.model) {
                let result = scenarios::run_serf_sweep(scenario, &omegas, model, &settings)?;
                for row in &result.rows {
                    let mut cells = vec![model.to_string(), num(rad_to_hz(row.omega_a))];
                    cells.extend(fit_columns(&row.fit));
                    cells.extend(derived_columns(&row.rates));
                    rows.push(cells);
                }
                match result.quadratic {
                    Some((a, b)) => eprintln!(
                        "{model}: FWHM = a*omega_a^2 + b with a = {} s, b = {} Hz (expected a = {} s)",
                        num(a),
                        num(rad_to_hz(b)),
                        num(result.predicted_quadratic().unwrap_or(f64::NAN)),
                    ),
                    None => eprintln!("{model}: too few successful rows for the quadratic fit"),
                }
            }
            table::write_csv(out, &header, &rows)
        }
        "p_pump_mw" => {
            let mut header = ["model", "p_pump_mw", "r_pump_over_q_hz", "omega_hz", "amplification"]
                .map(String::from)
                .to_vec();
            header.extend(derived_header());
            let mut rows = Vec::new();
            for model in models(args.model) {
                let result = scenarios::run_pump_sweep(scenario, &sweep.values, model, &settings)?;
                for row in &result.rows {
                    let mut cells = vec![
                        model.to_string(),
                        num(row.p_pump_mw),
                        num(rad_to_hz(row.rates.r_pump_over_q())),
                        num(rad_to_hz(row.omega)),
                        num(row.amplification),
                    ];
                    cells.extend(derived_columns(&row.rates));
                    rows.push(cells);
                }
                if let Some((x, y)) = result.optimum {
                    eprintln!(
                        "{model}: maximum amplification {} at R_pump/q = {} Hz",
                        num(y),
                        num(rad_to_hz(x))
                    );
                }
            }
            table::write_csv(out, &header, &rows)
        }
        other => bail!("scenario sweeps over `{other}` are not supported"),
    }
}
