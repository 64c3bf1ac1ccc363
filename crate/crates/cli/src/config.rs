//! Scenario configuration: the JSON schema, its validation and the
//! resolution of `"auto"` cutoff and Kraus-order settings.

use std::fmt;
use std::path::PathBuf;

use qdiffusion::channel::{default_kraus_order, ChannelTime, MAX_SQUEEZING};
use qdiffusion::fock::{state_vector, FockCutoff, StateSpec};
use qdiffusion::oracle::{ComplexGrid, QuadratureRule};
use qdiffusion::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Bound used by the automatic cutoff on the top-level population of a
/// thermal state with the final mean photon number.
pub const AUTO_TAIL_BUDGET: f64 = 1e-10;

/// Bound used by the automatic cutoff on the amplitudes of a pure input on
/// its two highest levels.
pub const AUTO_EDGE_AMPLITUDE: f64 = 1e-14;

/// Largest cutoff the automatic rule will pick before giving up.
pub const MAX_AUTO_DIM: usize = 400;

/// Quadrature grids coarser than this are rejected.
pub const MIN_GRID_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    /// `z` as `[re, im]`.
    Coherent { z: [f64; 2] },
    Number { l: usize },
    SqueezedVacuum { lambda: f64 },
    /// Chaotic state; on the P-function side a centred Gaussian of variance
    /// `mean_photon`.
    Thermal { mean_photon: f64 },
    /// Gaussian P-function `(1/variance) e^{−|α − center|²/variance}` known
    /// only through its samples on the scenario grid.
    GridSampled { center: [f64; 2], variance: f64 },
}

fn complex(v: [f64; 2]) -> Complex64 {
    Complex64::new(v[0], v[1])
}

impl InputSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            InputSpec::Coherent { .. } => "coherent",
            InputSpec::Number { .. } => "number",
            InputSpec::SqueezedVacuum { .. } => "squeezed_vacuum",
            InputSpec::Thermal { .. } => "thermal",
            InputSpec::GridSampled { .. } => "grid_sampled",
        }
    }

    /// The pure-state description, for the inputs that have one.
    pub fn pure_state(&self) -> Option<StateSpec> {
        match *self {
            InputSpec::Coherent { z } => Some(StateSpec::Coherent { z: complex(z) }),
            InputSpec::Number { l } => Some(StateSpec::Number { l }),
            InputSpec::SqueezedVacuum { lambda } => Some(StateSpec::SqueezedVacuum { lambda }),
            InputSpec::Thermal { .. } | InputSpec::GridSampled { .. } => None,
        }
    }

    /// Untruncated mean photon number of the input.
    pub fn mean_photon_number(&self) -> f64 {
        match *self {
            InputSpec::Thermal { mean_photon } => mean_photon,
            InputSpec::GridSampled { center, variance } => complex(center).norm_sqr() + variance,
            _ => self.pure_state().expect("pure input").mean_photon_number(),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            InputSpec::Thermal { mean_photon } => format!("thermal(nbar={mean_photon})"),
            InputSpec::GridSampled { center, variance } => {
                format!("grid_sampled(center={}{:+}i, variance={variance})", center[0], center[1])
            }
            _ => self.pure_state().expect("pure input").label(),
        }
    }

    pub fn supports(&self, route: Route) -> bool {
        match route {
            Route::Kraus | Route::OdeOracle => true,
            Route::ClosedForm => !matches!(self, InputSpec::GridSampled { .. }),
            Route::PIntegral => matches!(
                self,
                InputSpec::Coherent { .. } | InputSpec::Thermal { .. } | InputSpec::GridSampled { .. }
            ),
            Route::HusimiIntegral => self.pure_state().is_some(),
        }
    }

    /// Whether the diffused P-function is an ordinary function, so that it
    /// can be written out on a grid.
    pub fn has_regular_p(&self) -> bool {
        matches!(
            self,
            InputSpec::Coherent { .. } | InputSpec::Thermal { .. } | InputSpec::GridSampled { .. }
        )
    }

    fn validate(&self) -> Result<(), CliError> {
        let finite = |path: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(CliError::schema(path, format!("must be finite, got {v}")))
            }
        };
        match *self {
            InputSpec::Coherent { z } => {
                finite("input.z[0]", z[0])?;
                finite("input.z[1]", z[1])
            }
            InputSpec::Number { .. } => Ok(()),
            InputSpec::SqueezedVacuum { lambda } => {
                finite("input.lambda", lambda)?;
                if lambda.abs() > MAX_SQUEEZING {
                    return Err(CliError::schema(
                        "input.lambda",
                        format!("|lambda| must be <= {MAX_SQUEEZING}, got {lambda}"),
                    ));
                }
                Ok(())
            }
            InputSpec::Thermal { mean_photon } => {
                finite("input.mean_photon", mean_photon)?;
                if mean_photon < 0.0 {
                    return Err(CliError::schema("input.mean_photon", "must be >= 0"));
                }
                Ok(())
            }
            InputSpec::GridSampled { center, variance } => {
                finite("input.center[0]", center[0])?;
                finite("input.center[1]", center[1])?;
                finite("input.variance", variance)?;
                if variance <= 0.0 {
                    return Err(CliError::schema("input.variance", "must be > 0"));
                }
                Ok(())
            }
        }
    }

    /// Largest amplitude on the two highest retained levels. Coherences
    /// with the top level leak through the truncated generator, so the
    /// automatic cutoff bounds amplitudes rather than populations.
    fn edge_amplitude(&self, dim: usize) -> f64 {
        let Some(spec) = self.pure_state() else {
            return 0.0;
        };
        match FockCutoff::new(dim).and_then(|c| state_vector(&spec, c)) {
            Ok(v) => v[dim - 1].norm().max(v[dim - 2].norm()),
            Err(_) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Kraus,
    ClosedForm,
    PIntegral,
    HusimiIntegral,
    OdeOracle,
}

impl Route {
    pub fn name(self) -> &'static str {
        match self {
            Route::Kraus => "kraus",
            Route::ClosedForm => "closed_form",
            Route::PIntegral => "p_integral",
            Route::HusimiIntegral => "husimi_integral",
            Route::OdeOracle => "ode_oracle",
        }
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Report,
    PfunGrid,
    PhotonTrajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

/// An integer setting that may be left to the automatic rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SizeSetting {
    Fixed(usize),
    Auto(AutoKeyword),
}

impl Default for SizeSetting {
    fn default() -> Self {
        SizeSetting::Auto(AutoKeyword::Auto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    GaussLegendre,
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub radius: f64,
    pub points_per_axis: usize,
    pub rule: RuleName,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            radius: 6.0,
            points_per_axis: 48,
            rule: RuleName::GaussLegendre,
        }
    }
}

fn default_outputs() -> Vec<OutputKind> {
    vec![OutputKind::Report]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("qdiffusion-out")
}

/// The config document as written; echoed verbatim into the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub input: InputSpec,
    #[serde(alias = "tau")]
    pub tau_values: Vec<f64>,
    #[serde(default)]
    pub cutoff_dim: SizeSetting,
    #[serde(default)]
    pub kraus_max_index: SizeSetting,
    pub routes: Vec<Route>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<OutputKind>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

/// A validated scenario with every `"auto"` setting resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub file: ConfigFile,
    pub taus: Vec<ChannelTime>,
    /// Requested routes in canonical order.
    pub routes: Vec<Route>,
    pub cutoff: FockCutoff,
    pub grid: ComplexGrid,
}

impl ScenarioConfig {
    pub fn input(&self) -> &InputSpec {
        &self.file.input
    }

    pub fn wants(&self, out: OutputKind) -> bool {
        self.file.outputs.contains(&out)
    }

    pub fn has_route(&self, route: Route) -> bool {
        self.routes.contains(&route)
    }

    /// Kraus order used at channel time `tau`.
    pub fn kraus_order(&self, tau: ChannelTime) -> usize {
        match self.file.kraus_max_index {
            SizeSetting::Fixed(m) => m,
            SizeSetting::Auto(_) => default_kraus_order(tau, self.cutoff.dim()),
        }
    }

    pub fn set_output_dir(&mut self, dir: PathBuf) {
        self.file.output_dir = dir;
    }
}

/// Parses and validates a JSON config document.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ConfigFile = serde_path_to_error::deserialize(&mut *de).map_err(|e| {
        let path = e.path().to_string();
        CliError::schema(if path == "." { "$".to_string() } else { path }, e.into_inner().to_string())
    })?;
    de.end().map_err(|e| CliError::schema("$", e.to_string()))?;
    validate(file)
}

fn duplicate<T: PartialEq>(items: &[T]) -> Option<usize> {
    (1..items.len()).find(|&i| items[..i].contains(&items[i]))
}

fn validate(file: ConfigFile) -> Result<ScenarioConfig, CliError> {
    file.input.validate()?;

    if file.tau_values.is_empty() {
        return Err(CliError::schema("tau_values", "must not be empty"));
    }
    let mut taus = Vec::with_capacity(file.tau_values.len());
    for (i, &t) in file.tau_values.iter().enumerate() {
        let tau = ChannelTime::new(t).map_err(|e| CliError::schema(format!("tau_values[{i}]"), e.to_string()))?;
        if i > 0 && !(t > file.tau_values[i - 1]) {
            return Err(CliError::schema(
                format!("tau_values[{i}]"),
                format!("values must be sorted strictly ascending ({} then {t})", file.tau_values[i - 1]),
            ));
        }
        taus.push(tau);
    }

    if file.routes.is_empty() {
        return Err(CliError::schema("routes", "must name at least one route"));
    }
    if let Some(i) = duplicate(&file.routes) {
        return Err(CliError::schema(format!("routes[{i}]"), format!("duplicate route `{}`", file.routes[i])));
    }
    for &route in &file.routes {
        if !file.input.supports(route) {
            return Err(CliError::UnsupportedRouteForInput {
                route,
                input: file.input.kind().to_string(),
            });
        }
    }
    let mut routes = file.routes.clone();
    routes.sort();

    if let Some(i) = duplicate(&file.outputs) {
        return Err(CliError::schema(format!("outputs[{i}]"), "duplicate output"));
    }
    if let Some(i) = file.outputs.iter().position(|&o| o == OutputKind::PfunGrid) {
        if !file.input.has_regular_p() {
            return Err(CliError::schema(
                format!("outputs[{i}]"),
                format!("pfun_grid needs an input with a regular P-function, not {}", file.input.kind()),
            ));
        }
    }

    let g = file.grid;
    if g.points_per_axis < MIN_GRID_POINTS {
        return Err(CliError::schema(
            "grid.points_per_axis",
            format!("must be >= {MIN_GRID_POINTS}, got {}", g.points_per_axis),
        ));
    }
    let rule = match g.rule {
        RuleName::GaussLegendre => QuadratureRule::GaussLegendre,
        RuleName::Midpoint => QuadratureRule::Midpoint,
    };
    let grid =
        ComplexGrid::new(g.radius, g.points_per_axis, rule).map_err(|e| CliError::schema("grid.radius", e.to_string()))?;

    if let SizeSetting::Fixed(m) = file.kraus_max_index {
        if m < 1 {
            return Err(CliError::schema("kraus_max_index", "must be >= 1"));
        }
    }
    let tau_max = *file.tau_values.last().expect("nonempty");
    let dim = match file.cutoff_dim {
        SizeSetting::Fixed(d) => {
            if d < 2 {
                return Err(CliError::schema("cutoff_dim", "must be >= 2"));
            }
            d
        }
        SizeSetting::Auto(_) => auto_cutoff(&file, tau_max)?,
    };
    let cutoff = FockCutoff::new(dim)?;

    Ok(ScenarioConfig {
        file,
        taus,
        routes,
        cutoff,
        grid,
    })
}

/// Smallest cutoff with `dim ≥ ⌈4(n̄ + τ_max) + 10⌉` that also keeps the
/// input tail, the thermal tail of the final mean photon number and the Kraus
/// band inside the truncated space.
fn auto_cutoff(file: &ConfigFile, tau_max: f64) -> Result<usize, CliError> {
    let input = &file.input;
    let nbar = input.mean_photon_number();
    let final_mean = nbar + tau_max;
    let ratio = final_mean / (final_mean + 1.0);
    let kraus = file.routes.contains(&Route::Kraus);
    let t_max = ChannelTime::new(tau_max)?;
    let fits = |dim: usize| {
        if ratio.powi(dim as i32) > AUTO_TAIL_BUDGET || input.edge_amplitude(dim) > AUTO_EDGE_AMPLITUDE {
            return false;
        }
        if let InputSpec::Number { l } = *input {
            if 2 * l >= dim {
                return false;
            }
        }
        if kraus {
            let m = match file.kraus_max_index {
                SizeSetting::Fixed(m) => m,
                SizeSetting::Auto(_) => default_kraus_order(t_max, dim),
            };
            if dim < m + 2 + nbar.ceil() as usize {
                return false;
            }
        }
        true
    };
    let mut dim = ((4.0 * final_mean + 10.0).ceil() as usize).max(2);
    while !fits(dim) {
        dim += 1;
        if dim > MAX_AUTO_DIM {
            return Err(CliError::Truncation(format!(
                "automatic cutoff for {} at tau = {tau_max} would exceed {MAX_AUTO_DIM} levels",
                input.label()
            )));
        }
    }
    Ok(dim)
}
