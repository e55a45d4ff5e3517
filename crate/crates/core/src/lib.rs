pub mod env;
pub mod eval;
pub mod gradcheck;
pub mod netcore;
pub mod rollout;
pub mod trainer;
