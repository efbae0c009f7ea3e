//! Greedy packing of the rectangles `1/i x 1/(i+1)` into the unit square.
//!
//! The engine keeps every empty region as an axis-aligned box, puts each
//! rectangle into the smallest box it fits and cuts the leftover with one
//! guillotine cut. Around it sit an exact-arithmetic verifier, the strip
//! construction that bounds the container needed for the infinite tail,
//! and the continuation and epsilon estimates built on a finished run.

pub mod analysis;
pub mod boxstore;
pub mod checkpoint;
pub mod geometry;
pub mod numerics;
pub mod packer;
pub mod render;
pub mod stream;
pub mod verifier;

pub use analysis::{
    bound_report, container_side, continuation, epsilon_report, glued_layout, grid_lower_bound, strip_area_bound,
    strip_layout, AnalysisError, BoundReport, ContinuationReport, EpsilonReport, GluedLayout, StripLayout, StripRow,
};
pub use boxstore::{BoxKey, BoxOrder, BoxStore, StoreError};
pub use geometry::{
    box_area, fits, fits_with, place_and_split, EmptyBox, Orientation, OrientationRule, Placement, RectSpec,
    SplitPolicy,
};
pub use numerics::{
    harmonic_partial, ln2_bracket, parse_rational, rect_dims, remaining_area, CompensatedSum, Decision, Exact,
    Float, NumericMode, RationalInterval, Scalar,
};
pub use packer::{Packer, PackerConfig, PackError, PackingResult, StatsSnapshot, Termination};
pub use render::render_svg;
pub use stream::{BoxDump, PlacementSink, StreamError};
pub use verifier::{
    check_conservation, check_containment, check_no_overlap, check_no_overlap_brute, replay_compare, verify,
    Divergence, ValidityReport, VerifyError,
};
