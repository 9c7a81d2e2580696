use std::path::{Path, PathBuf};

use ifenn::config::{Geometry, Mode, RunConfig, SourceKind};
use ifenn::fem::{
    extract_collocation, solve_coupled, write_history_csv, write_timing_csv, CollocationSet, SolutionHistory,
};
use ifenn::ifenn::{
    model_landscape, run_ifenn, sha256_hex, train_data_driven, train_pinn_sequence, train_pitcn, MeshId,
    ModelKind, RateReplay, RunManifest, StrainRateSource, ThetaProvider, TrainedModel,
};
use ifenn::loss::write_loss_history;
use ifenn::mesh::{write_mesh, Mesh};
use ifenn::network::{Architecture, TcnConfig};
use ifenn::optim::write_atomic;
use ifenn::{Error, Result};

use crate::compare::{field_errors, write_summary};

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    let joined = base.join(p);
    std::fs::canonicalize(&joined).unwrap_or(joined)
}

fn resolve_geometry(g: &mut Geometry, base: &Path) {
    if let Geometry::MeshFile { path } = g {
        *path = absolute(base, path);
    }
}

/// Makes every path in the config independent of the working directory.
fn resolve_paths(cfg: &mut RunConfig, base: &Path) {
    resolve_geometry(&mut cfg.problem, base);
    if let Some(g) = &mut cfg.deploy.mesh {
        resolve_geometry(g, base);
    }
    if let Some(m) = &mut cfg.deploy.model {
        *m = absolute(base, m);
    }
}

struct Run {
    cfg: RunConfig,
    out: PathBuf,
    manifest: RunManifest,
}

pub fn run(mode: Mode, config_path: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let mut cfg = RunConfig::load(config_path)?;
    if cfg.mode != mode {
        return Err(Error::Config(format!(
            "config is for mode `{}`, not `{}`",
            cfg.mode.name(),
            mode.name()
        )));
    }
    if let Some(s) = seed {
        cfg.override_seed(s);
    }
    let base = config_path.parent().unwrap_or(Path::new(""));
    resolve_paths(&mut cfg, base);
    let out = out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(mode.name()));
    cfg.output_dir = Some(out.clone());
    std::fs::create_dir_all(&out).map_err(io(&out))?;

    let resolved = serde_json::to_value(&cfg)?;
    write_atomic(
        &out.join("config.resolved.json"),
        serde_json::to_string_pretty(&resolved)?.as_bytes(),
    )?;
    let mut manifest = RunManifest::new(mode.name(), resolved);
    manifest.seeds = cfg.seeds();
    let mut run = Run { cfg, out, manifest };
    let result = match mode {
        Mode::Fem => run.fem(),
        Mode::Train => run.train(),
        Mode::Ifenn => run.ifenn(),
        Mode::Landscape => run.landscape(),
        Mode::Compare => Err(Error::Config("compare takes two run directories, not a config".into())),
    };
    if let Err(e) = &result {
        run.manifest.notes.push(format!("failed: {e}"));
    }
    run.manifest.write(&run.out.join("manifest.json"))?;
    result
}

impl Run {
    fn problem_mesh(&self) -> Result<Mesh> {
        let mesh = self.cfg.problem.build(Path::new(""))?;
        self.cfg.bcs.validate(&mesh)?;
        Ok(mesh)
    }

    /// Coupled solve on `mesh`, exported to `dir`.
    fn reference(&mut self, mesh: &Mesh, dir: &Path, label: &str) -> Result<SolutionHistory> {
        let grid = self.cfg.time.grid()?;
        log::info!(
            "{label}: coupled solve, {} nodes, {} increments",
            mesh.n_nodes(),
            grid.len()
        );
        let history = solve_coupled(mesh, &self.cfg.material, &self.cfg.bcs, &grid)?;
        write_history_csv(&history, mesh, dir)?;
        write_timing_csv(&history, &dir.join("timing.csv"))?;
        write_mesh(mesh, dir.join("mesh.txt"))?;
        self.manifest
            .timing
            .push((format!("{label}.coupled_seconds"), history.total_seconds()));
        self.manifest.notes.push(format!(
            "{label}: {} nodes, {} elements, {} coupled unknowns",
            mesh.n_nodes(),
            mesh.n_elements(),
            history.n_unknowns
        ));
        Ok(history)
    }

    fn fem(&mut self) -> Result<()> {
        let mesh = self.problem_mesh()?;
        let out = self.out.clone();
        self.reference(&mesh, &out, "fem")?;
        Ok(())
    }

    fn collocation(&self, mesh: &Mesh, history: &SolutionHistory) -> Result<CollocationSet> {
        let grid = self.cfg.time.grid()?;
        extract_collocation(
            history,
            mesh,
            &grid,
            &self.cfg.bcs,
            self.cfg.collocation.boundary_points_per_tag,
        )
    }

    fn reference_notes(&mut self) {
        let Some(t) = &self.cfg.training else { return };
        let Architecture::Tcn(tcn) = &t.network.architecture else {
            return;
        };
        let reference = TcnConfig::reference();
        let mut diffs = Vec::new();
        if tcn.n_filters != reference.n_filters {
            diffs.push(format!("n_filters {} (reference {})", tcn.n_filters, reference.n_filters));
        }
        if tcn.kernel_size != reference.kernel_size {
            diffs.push(format!("kernel_size {} (reference {})", tcn.kernel_size, reference.kernel_size));
        }
        if tcn.dilations != reference.dilations {
            diffs.push(format!("dilations {:?} (reference {:?})", tcn.dilations, reference.dilations));
        }
        if tcn.n_stacks != reference.n_stacks {
            diffs.push(format!("n_stacks {} (reference {})", tcn.n_stacks, reference.n_stacks));
        }
        if diffs.is_empty() {
            self.manifest.notes.push("TCN hyperparameters match the reference configuration".into());
        } else {
            self.manifest
                .notes
                .push(format!("TCN deviates from the reference configuration: {}", diffs.join(", ")));
        }
    }

    fn train_model(&mut self, mesh: &Mesh, history: &SolutionHistory) -> Result<TrainedModel> {
        let training = self
            .cfg
            .training
            .clone()
            .ok_or_else(|| Error::Config("no `training` block".into()))?;
        let set = self.collocation(mesh, history)?;
        log::info!(
            "training {:?} on {} collocation points x {} increments",
            self.cfg.model_kind,
            set.n_points(),
            set.n_steps()
        );
        let checkpoint = self.out.join("checkpoint.json");
        let (model, report) = match self.cfg.model_kind {
            ModelKind::PiTcn => train_pitcn(&set, &self.cfg.material, &training, mesh, Some(&checkpoint))?,
            ModelKind::DataDrivenTcn => {
                train_data_driven(&set, &self.cfg.material, &training, mesh, Some(&checkpoint))?
            }
            ModelKind::MlpPinnSequence => train_pinn_sequence(&set, &self.cfg.material, &training, mesh)?,
        };
        model.save(&self.out.join("model.json"))?;
        write_loss_history(&report.history, &self.out.join("loss_history.csv"))?;
        write_atomic(
            &self.out.join("training_report.json"),
            serde_json::to_string_pretty(&report)?.as_bytes(),
        )?;
        self.reference_notes();
        self.manifest.timing.push(("training_seconds".into(), report.seconds));
        let l = model.final_loss;
        self.manifest.errors.extend([
            ("final_loss.L2_E".to_string(), l.l2_e),
            ("final_loss.L2_T".to_string(), l.l2_t),
            ("final_loss.L2_q".to_string(), l.l2_q),
            ("final_loss.total".to_string(), l.total),
        ]);
        self.manifest.notes.push(format!(
            "{} parameters, {} loss evaluations, termination {:?}",
            model.network.n_params(),
            report.evaluations,
            report.termination.last()
        ));
        if !report.failed_steps.is_empty() {
            self.manifest
                .notes
                .push(format!("optimization failed at increments {:?}", report.failed_steps));
        }
        log::info!("training done in {:.1} s, final loss {:e}", report.seconds, l.total);
        Ok(model)
    }

    fn train(&mut self) -> Result<()> {
        let mesh = self.problem_mesh()?;
        let dir = self.out.join("fem");
        let history = self.reference(&mesh, &dir, "fem")?;
        self.train_model(&mesh, &history)?;
        Ok(())
    }

    /// Loads the configured model, or trains one.
    fn model(&mut self, mesh: &Mesh, history: &SolutionHistory) -> Result<TrainedModel> {
        match self.cfg.deploy.model.clone() {
            Some(path) => {
                let model = TrainedModel::load(&path)?;
                if model.training_mesh != MeshId::of(mesh) {
                    return Err(Error::Config(format!(
                        "{} was trained on a different mesh than the configured problem",
                        path.display()
                    )));
                }
                self.manifest
                    .notes
                    .push(format!("model loaded from {}", path.display()));
                Ok(model)
            }
            None => self.train_model(mesh, history),
        }
    }

    fn ifenn(&mut self) -> Result<()> {
        let train_mesh = self.problem_mesh()?;
        let deploy_mesh = match &self.cfg.deploy.mesh {
            Some(g) => {
                let m = g.build(Path::new(""))?;
                self.cfg.bcs.validate(&m)?;
                Some(m)
            }
            None => None,
        };
        let label = if deploy_mesh.is_some() { "fem_train" } else { "fem" };
        let train_dir = self.out.join(label);
        let train_hist = self.reference(&train_mesh, &train_dir, label)?;
        let model = if self.cfg.deploy.oracle {
            None
        } else {
            Some(self.model(&train_mesh, &train_hist)?)
        };

        let (mesh, reference) = match deploy_mesh {
            Some(m) => {
                let dir = self.out.join("fem");
                let h = self.reference(&m, &dir, "fem")?;
                (m, h)
            }
            None => (train_mesh.clone(), train_hist.clone()),
        };
        let provider = match &model {
            Some(model) => {
                let source = match self.cfg.deploy.strain_rate_source {
                    SourceKind::Replay => StrainRateSource::Replay(RateReplay::new(&train_mesh, &train_hist)?),
                    SourceKind::Lagged => StrainRateSource::Lagged,
                };
                ThetaProvider::Network(model, source)
            }
            None => ThetaProvider::Oracle(&reference.theta),
        };
        let grid = self.cfg.time.grid()?;
        let run = run_ifenn(&mesh, &self.cfg.material, &self.cfg.bcs, &grid, &provider)?;
        self.manifest.strain_rate_source = Some(run.strain_rate_source.into());
        let dir = self.out.join("ifenn");
        write_history_csv(&run.history, &mesh, &dir)?;
        write_timing_csv(&run.history, &dir.join("timing.csv"))?;
        if run.extrapolated_nodes > 0 {
            self.manifest.notes.push(format!(
                "{} deployment nodes outside the training mesh",
                run.extrapolated_nodes
            ));
        }

        let mut fields = vec![("theta", field_errors(&run.history.theta, &reference.theta)?)];
        let comps = ["u_x", "u_y"];
        for (c, name) in comps.iter().enumerate().take(mesh.dim()) {
            let a = run.history.displacement_field(c);
            let b = reference.displacement_field(c);
            fields.push((name, field_errors(&a, &b)?));
        }
        write_summary(&fields, &self.out.join("errors.csv"))?;
        let last = grid.len() - 1;
        for (name, r) in &fields {
            self.manifest.errors.extend([
                (format!("{name}.final_max_abs"), r.max_abs_at(last)),
                (format!("{name}.final_max_rel_percent"), r.max_rel_at(last)),
                (format!("{name}.max_abs"), r.max_abs().map_or(0.0, |m| m.value)),
                (format!("{name}.aggregate"), r.aggregate),
            ]);
        }

        let n = grid.len() as f64;
        let coupled = reference.total_seconds();
        let solve = run.history.total_seconds();
        let rows = [
            ("coupled_total", coupled),
            ("coupled_per_step", coupled / n),
            ("ifenn_solve_total", solve),
            ("ifenn_solve_per_step", solve / n),
            ("ifenn_predict_total", run.predict_seconds),
            ("coupled_unknowns", reference.n_unknowns as f64),
            ("ifenn_unknowns", run.history.n_unknowns as f64),
        ];
        let mut csv = String::from("quantity,value\n");
        for (k, v) in rows {
            csv.push_str(&format!("{k},{v:e}\n"));
        }
        std::fs::write(self.out.join("timing_summary.csv"), csv).map_err(io(&self.out))?;
        self.manifest
            .timing
            .extend(rows.iter().take(5).map(|(k, v)| (k.to_string(), *v)));
        log::info!(
            "final-step max Θ error {:.4}% ({} rates); solve {:.3} s vs coupled {:.3} s",
            fields[0].1.max_rel_at(last),
            run.strain_rate_source,
            solve,
            coupled
        );
        Ok(())
    }

    fn landscape(&mut self) -> Result<()> {
        let mesh = self.problem_mesh()?;
        let dir = self.out.join("fem");
        let history = self.reference(&mesh, &dir, "fem")?;
        let model = self.model(&mesh, &history)?;
        let set = self.collocation(&mesh, &history)?;
        let ls = self.cfg.landscape;
        log::info!("sampling a {0}x{0} landscape", ls.n_per_axis);
        let clock = std::time::Instant::now();
        let (grid, dirs) = model_landscape(&model, &set, ls.n_per_axis, ls.seed)?;
        grid.write_csv(&self.out.join("landscape.csv"))?;
        self.manifest
            .timing
            .push(("landscape_seconds".into(), clock.elapsed().as_secs_f64()));
        let phi = serde_json::to_string(&model.params)?;
        self.manifest.notes.push(format!("phi_sha256 {}", sha256_hex(phi.as_bytes())));
        if !dirs.zero_filters.is_empty() {
            self.manifest.notes.push(format!(
                "zero-norm filters (direction slices set to zero): {:?}",
                dirs.zero_filters
            ));
        }
        let center = grid
            .center()
            .ok_or_else(|| Error::NonFinite {
                iteration: 0,
                value: f64::NAN,
            })?;
        self.manifest.errors.extend([
            ("center_loss".to_string(), center),
            ("final_training_loss".to_string(), model.final_loss.total),
            ("center_rank".to_string(), grid.center_rank().unwrap_or(0) as f64),
        ]);
        if center != model.final_loss.total {
            log::warn!(
                "landscape center {center:e} differs from the stored final loss {:e}",
                model.final_loss.total
            );
        }
        Ok(())
    }
}
