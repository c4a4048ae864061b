//! Generalized Cantor sets, Cantor grills, placed copies and box counting.

mod boxcount;
mod bvh;
mod cantor;
mod placement;
mod union;

pub use boxcount::{
    box_counting_dimension, box_counting_in_ball, count_cells, default_scale_range,
    geometric_scales, DimensionEstimate, FIT_TOLERANCE,
};
pub(crate) use boxcount::occupied_cells;
pub use cantor::{cantor_for_dimension, cantor_grill, GeneralizedCantorSet, RatioSchedule};
pub use placement::{place, place_with_permutation, AffinePlacement, PLACEMENT_MARGIN};
pub use union::{Ball, BoxUnion, SetKind, SetMeta};
