//! Dynamics (placeholder).
pub struct Trajectory<T>(std::marker::PhantomData<T>);
pub struct ScalingFit<T>(std::marker::PhantomData<T>);
