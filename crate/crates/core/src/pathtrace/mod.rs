// SPDX-License-Identifier: MIT OR Apache-2.0

//! Locally linear path decomposition of a traced forward pass.

mod analytics;
mod enumerate;
mod surrogates;

pub use analytics::{head_activity, path_contribution_by_token, HeadActivity, SamplePaths, TokenContribution};
pub use enumerate::{enumerate_paths, Edge, EdgePolicy, EnumerateOptions, Enumeration, MlpBranch, PathRecord, PathStep};
pub use surrogates::{build_surrogates, layer_rewrite_check, Surrogates};
