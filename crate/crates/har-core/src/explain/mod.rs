//! Explainability suite: CWT scalograms, layer-wise relevance propagation
//! with composite rules, gradient-based comparators, and the
//! masking-faithfulness experiment.

pub mod cwt;
pub mod gradients;
pub mod lrp;
pub mod masking;

pub use cwt::{cwt_morlet, Scalogram};
pub use gradients::{guided_backprop, integrated_gradients, saliency};
pub use lrp::{lrp, ExplainTarget, LrpConfig, LrpMode, LrpTrace, RelevanceMap};
pub use masking::{mask_faithfulness, mean_curve, AttributionMethod, MaskCurve, MaskOrder};
