//! Machine-readable command output. Every report carries a `command` tag;
//! the shapes are described by `docs/cli-json-schema.json`.

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct ExcessRow {
    pub coalition: String,
    pub worth: f64,
    pub payment: f64,
    pub excess: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub coalition: String,
    pub excess: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HistogramBin {
    /// `None` for the open last bin.
    pub upper: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Report {
    Eval {
        players: Vec<String>,
        x: Vec<f64>,
        projected: bool,
        excesses: Vec<ExcessRow>,
        aggrieved: Vec<String>,
        theta: f64,
        phi: Vec<f64>,
        phi_norm: f64,
        lipschitz: f64,
        in_core: bool,
    },
    Flow {
        integrator: String,
        status: String,
        final_point: Vec<f64>,
        final_theta: f64,
        final_phi_norm: f64,
        final_time: f64,
        samples: usize,
        steps: usize,
        rejected_steps: usize,
        region_crossings: usize,
        fallbacks: usize,
        output: Option<String>,
    },
    CoreCheck {
        member: bool,
        tolerance: f64,
        violations: Vec<Violation>,
    },
    CoreNonempty {
        nonempty: bool,
        least_core_value: f64,
    },
    CoreLeast {
        least_core_value: f64,
        nonempty: bool,
        witness: Vec<f64>,
    },
    CoreProject {
        point: Vec<f64>,
        distance: f64,
    },
    Balanced {
        collection: Vec<String>,
        balanced: bool,
        weights: Option<Vec<f64>>,
        eta_residual: Option<f64>,
    },
    Probe {
        integrator: String,
        runs: usize,
        core_nonempty: bool,
        least_core_value: f64,
        reached_core: usize,
        stationary: usize,
        unfinished: usize,
        audit_failures: usize,
        max_final_distance: Option<f64>,
        stationary_theta_spread: Option<f64>,
        time_histogram: Vec<HistogramBin>,
    },
    Plot {
        output: String,
        trajectories: usize,
    },
}
