//! Small-divisor scans (placeholder).
pub struct Certificate<T>(std::marker::PhantomData<T>);
