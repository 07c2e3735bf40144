//! Above-barrier reflection in one dimension: exact, Born and complex-WKB
//! reflectances, their applicability map, and localization in smooth random
//! potentials.

pub mod born;
pub mod error;
pub mod exact;
pub mod localization;
pub mod model;
pub mod quadrature;
pub mod random;
pub mod regime;
pub mod tabulated;
pub mod wkb;

pub use born::{
    born_closed_form, reflectance_born, BornMethod, BornOptions, BornResult, BornStatus,
    TailRegularization,
};
pub use error::{Error, Result};
pub use exact::{
    reflectance_closed_form, reflectance_exact, Backend, ContourShift, LogReflectance,
    ScatterResult, SolveOptions, Status,
};
pub use localization::{
    born_lloc, estimate_lloc, measure_transmission, turning_point_histogram, wkb_lloc_estimate,
    EnsembleConfig, HistogramOptions, LocalizationEstimate, MGammaHistogram, WkbLlocEstimate,
};
pub use model::{
    eval_shape, eval_shape_derivative, nondimensionalize, tail_values, Family, PhysicalScales,
    PotentialSpec, TailValues,
};
pub use random::{
    correlation_fourier, synthesize_random, synthesize_realization, Correlation, FourierSeries,
    FourierSeriesDocument, SynthesisOptions,
};
pub use regime::{
    classify, crossover_line, default_grids, evaluate_cell, linear_fit, log_grid, sweep,
    CrossoverLine, CrossoverPoint, LineAxis, Regime, RegimeCell, SweepOptions, Thresholds,
};
pub use tabulated::Tabulated;
pub use wkb::{
    find_turning_points, reflectance_wkb, smoothness_criterion, wkb_action, ComplexPoint,
    Singularity, TurningPoint, TurningPointSet, WkbOptions, WkbResult,
};
