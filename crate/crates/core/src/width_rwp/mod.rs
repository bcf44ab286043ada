//! Gaussian widths, robust-width violation search, RIP enumeration and the
//! conversions between RIP, RWP and recovery constants.

mod constants;
mod rip;
mod search;
mod width;

pub use constants::{
    cai_zhang_feasible, cai_zhang_threshold, converse_constants, guarantee_constants, measurement_budget,
    rip_to_rwp, BudgetScheme, CaiZhangOutcome, GuaranteeConstants, MeasurementBudget, CAI_ZHANG_T_MAX,
    CAI_ZHANG_T_MIN,
};
pub use rip::{rip_enumerate, rip_sample, support_singular_range, RipReport, ENUMERATION_GUARD};
pub use search::{is_rwp_witness, rwp_search, RwpParams, RwpReport, RwpVerdict, WITNESS_MARGIN};
pub use width::{
    analytic_width_bound_l1, gaussian_width_mc, top_j_energy_mc, width_maximizer, width_sample, WidthEstimate,
};
