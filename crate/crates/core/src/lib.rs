//! Profit-maximizing personalized pricing when the price distribution must
//! not depend on a protected group, with optimal-transport certificates.
//!
//! The pipeline for one cost level ("slice") is: build the two value
//! distributions ([`dist`]), solve the cutoffs ([`cutoffs`]), turn them into
//! a pricing rule ([`pricing`]), evaluate it ([`welfare`]), and check it
//! against the optimal coupling ([`matching`]), the dual certificate
//! ([`duality`]) and a brute-force assignment solver ([`oracle`]).
//!
//! ```
//! use fairprice::{cutoffs, dist::MarketSlice, pricing, welfare};
//!
//! let slice = MarketSlice::exponential(1.0, 3.0, 0.5, 0.0).unwrap();
//! let k = cutoffs::solve_kappa(&slice).unwrap();
//! assert!(k.max_residual() <= cutoffs::KAPPA_TOL);
//!
//! let rule = pricing::build_p_star(&slice).unwrap();
//! assert!(pricing::check_nondiscrimination(&rule, &slice).unwrap() <= pricing::ND_TOL);
//! let report = welfare::welfare_report(&rule, &slice);
//! assert!(report.share() > 0.9 && report.share() < 1.0);
//! ```

pub mod cli;
pub mod cutoffs;
pub mod dist;
pub mod duality;
pub mod error;
pub mod matching;
pub mod numeric;
pub mod oracle;
pub mod pricing;
pub mod welfare;

pub use cutoffs::{Cutoffs, Kappa, Region};
pub use dist::{Family, Group, Market, MarketSlice, ValueDistribution};
pub use error::{Error, Result};
pub use pricing::PricingRule;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/cutoffs.md")]
    mod cutoffs {}
    #[doc = include_str!("../../../book/src/pricing.md")]
    mod pricing {}
    #[doc = include_str!("../../../book/src/welfare.md")]
    mod welfare {}
    #[doc = include_str!("../../../book/src/certificates.md")]
    mod certificates {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/numerics.md")]
    mod numerics {}
}
