//! Normal form (placeholder).
pub struct NormalFormResult<T>(std::marker::PhantomData<T>);
