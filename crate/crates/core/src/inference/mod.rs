//! Predictor contract, promptable head math, sliding-window and click-local
//! inference.

pub mod external;
pub mod head;
pub mod predictor;
pub mod prompt;
pub mod sliding;

pub use external::ExternalPredictor;
pub use head::{embed_points, prompt_head, Linear, Mlp, PromptHeadParams};
pub use predictor::{
    CompositePredictor, ConstantPredictor, IntensityWindowPredictor, OraclePredictor, Predictor,
    RegionGrowPredictor,
};
pub use prompt::{ClassPrompt, PointContext, PointPrompt, Polarity, Prompt};
pub use sliding::{
    point_local_inference, point_local_inference_at, sliding_window, BlendKernel, LocalResult,
    SlidingWindowConfig, DEFAULT_THRESHOLD,
};
