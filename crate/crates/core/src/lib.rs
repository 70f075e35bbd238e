//! Option pricing under uncertain volatility: error propagation, bid/ask
//! quotes, implied smiles and Monte Carlo checks of the hedging P&L law.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod error_calculus;
pub mod implied;
pub mod lognormal;
pub mod normal;
pub mod quotes;
pub mod sim;

pub use error::{Error, Result};
pub use error_calculus::{
    chebyshev_tail, combine_independent, gaussian_expansion, propagate, GaussianExpansion, SmoothFunctionJet,
    UncertainParameter,
};
pub use implied::{build_smile, implied_vol, smile_diagnostics, QuoteSource, SmileGrid, SmileReport, SmileVerdict};
pub use lognormal::{CallSpec, LognormalMarket, TotalVolUncertainty};
pub use quotes::{make_quote, quote_call, QuantileMode, QuoteTriple, RiskPolicy};
