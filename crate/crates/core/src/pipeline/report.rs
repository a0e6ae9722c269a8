use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::pointcloud::io::format_sig9;
use crate::{Error, Result};

/// Everything a run measured. Fields stay `None` for stages that did not run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub config: Vec<(String, String)>,
    /// Wall time per completed stage.
    pub stage_seconds: Vec<(String, f64)>,
    /// `None` on success, otherwise the failing stage and message.
    pub failure: Option<(String, String)>,
    pub input_points: Option<usize>,
    pub downsampled_points: Option<usize>,
    pub lambda: Option<f64>,
    pub initial_objective: Option<f64>,
    pub fit_objectives: Vec<f64>,
    pub fit_nrmse: Option<f64>,
    pub valid_projections: Option<usize>,
    pub invalid_projections: Option<usize>,
    pub non_converged_projections: Option<usize>,
    pub density: Option<f64>,
    pub resolution: Option<usize>,
    pub hole_cells: Option<usize>,
    pub known_cells: Option<usize>,
    pub inpaint_targets: Option<usize>,
    pub solver_iterations: Option<usize>,
    pub solver_residual: Option<f64>,
    pub fill_target: Option<usize>,
    pub halton_draws: Option<usize>,
    pub new_points: Option<usize>,
    pub merged_points: Option<usize>,
}

impl RunReport {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let status = match &self.failure {
            None => "ok".to_string(),
            Some((stage, _)) => format!("failed:{stage}"),
        };
        let _ = writeln!(out, "status={status}");
        if let Some((_, msg)) = &self.failure {
            let _ = writeln!(out, "error={}", msg.replace('\n', " "));
        }
        for (k, v) in &self.config {
            let _ = writeln!(out, "config.{k}={v}");
        }
        for (stage, s) in &self.stage_seconds {
            let _ = writeln!(out, "time.{stage}={s:.6}");
        }
        let mut num = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                let _ = writeln!(out, "{k}={v}");
            }
        };
        let int = |v: Option<usize>| v.map(|v| v.to_string());
        let real = |v: Option<f64>| v.map(format_sig9);
        num("input_points", int(self.input_points));
        num("downsampled_points", int(self.downsampled_points));
        num("lambda", real(self.lambda));
        num("initial_objective", real(self.initial_objective));
        if !self.fit_objectives.is_empty() {
            let list: Vec<String> = self.fit_objectives.iter().map(|&v| format_sig9(v)).collect();
            num("fit_objectives", Some(list.join(",")));
        }
        num("fit_nrmse", real(self.fit_nrmse));
        num("valid_projections", int(self.valid_projections));
        num("invalid_projections", int(self.invalid_projections));
        num("non_converged_projections", int(self.non_converged_projections));
        num("density", real(self.density));
        num("resolution", int(self.resolution));
        num("hole_cells", int(self.hole_cells));
        num("known_cells", int(self.known_cells));
        num("inpaint_targets", int(self.inpaint_targets));
        num("solver_iterations", int(self.solver_iterations));
        num("solver_residual", real(self.solver_residual));
        num("fill_target", int(self.fill_target));
        num("halton_draws", int(self.halton_draws));
        num("new_points", int(self.new_points));
        num("merged_points", int(self.merged_points));
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
