//! Monte Carlo engine for the hedging P&L under an uncertain volatility
//! estimate.

pub mod basis;
pub mod hedge;
pub mod law;
pub mod paths;
pub mod payoff;
pub mod pricer;
pub mod quadrature;
pub mod rng;
pub mod validate;

pub use basis::{BasisComponent, BasisFunction, VolatilityBasis};
pub use hedge::{hedge_pnl, simulate_pnl, PathPnl, PnlStats, TestFunctionJet};
pub use law::{estimate_law, Estimate, PnLLawEstimate, DEFAULT_RELATIVE_BUMP};
pub use paths::{simulate_paths, PathEnsemble, Scheme, SimulationConfig};
pub use payoff::{OptionSpec, Payoff};
pub use pricer::{
    build_pricer, BlackScholesCall, GridSpec, HedgePricer, LognormalGridPricer, NestedMcPricer, NestedMcSpec,
    PricerKind,
};
pub use validate::{validate_expansion, ExpansionMethod, ValidationConfig, ValidationReport};
