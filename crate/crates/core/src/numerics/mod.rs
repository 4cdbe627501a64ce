//! Dense arithmetic, seeded randomness and first-order optimization.

mod adam;
mod clip;
mod gradcheck;
mod linalg;
mod rng;

use alloc::vec;
use alloc::vec::Vec;

pub use adam::{AdamConfig, AdamState};
pub use clip::{clip_gradients, global_norm};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use linalg::{matvec, Matrix, Vector};
pub use rng::Rng;

pub(crate) use linalg::squared_distance;

/// A named parameter group: a flat view onto one weight matrix or bias.
pub type ParamGroup<'a> = (&'static str, &'a [f64]);
pub type ParamGroupMut<'a> = (&'static str, &'a mut [f64]);

/// A bundle of trainable parameters.
///
/// Gradients are represented by a value of the same type, so an optimizer or
/// checker can pair groups up positionally. Implementations must return the
/// groups in the same order from both methods.
pub trait Parameters {
    fn groups(&self) -> Vec<ParamGroup<'_>>;
    fn groups_mut(&mut self) -> Vec<ParamGroupMut<'_>>;

    fn parameter_count(&self) -> usize {
        self.groups().iter().map(|(_, g)| g.len()).sum()
    }

    /// Sets every parameter to zero.
    fn zero(&mut self) {
        for (_, g) in self.groups_mut() {
            g.fill(0.0);
        }
    }
}

impl Parameters for Vector {
    fn groups(&self) -> Vec<ParamGroup<'_>> {
        vec![("vector", self.as_slice())]
    }

    fn groups_mut(&mut self) -> Vec<ParamGroupMut<'_>> {
        vec![("vector", self.as_mut_slice())]
    }
}

impl Parameters for Matrix {
    fn groups(&self) -> Vec<ParamGroup<'_>> {
        vec![("matrix", self.as_slice())]
    }

    fn groups_mut(&mut self) -> Vec<ParamGroupMut<'_>> {
        vec![("matrix", self.as_mut_slice())]
    }
}

/// Checks that two bundles have the same group layout.
pub(crate) fn check_same_layout<P: Parameters>(op: &'static str, a: &P, b: &P) -> crate::Result<()> {
    let ga = a.groups();
    let gb = b.groups();
    if ga.len() != gb.len() {
        return Err(crate::Error::shape(op, ga.len(), gb.len()));
    }
    for ((name, x), (_, y)) in ga.iter().zip(&gb) {
        if x.len() != y.len() {
            return Err(crate::Error::Shape {
                op,
                left: alloc::format!("{name}[{}]", x.len()),
                right: alloc::format!("{name}[{}]", y.len()),
            });
        }
    }
    Ok(())
}
