//! Basis-restricted elastic shape analysis of triangle meshes.
//!
//! Shapes are decoded from a latent code by a linear deformation basis on a
//! fixed template. The latent space carries the pullback of a six-parameter
//! split second-order Sobolev metric, and geodesics in it give interpolation
//! (boundary value problems), extrapolation (initial value problems) and
//! registration of arbitrary scans. Data terms use the varifold kernel
//! distance, which needs no point correspondences.

pub mod basis;
pub mod container;
pub mod discrepancy;
pub mod error;
pub mod eval;
pub mod generation;
pub mod latent;
pub mod mesh;
pub mod optim;
pub mod geodesic;
pub mod sobolev;
pub mod synthetic;

pub use error::{Error, Result};

pub use mesh::{DeformationField, FaceGeometry, Point3, TriMesh};
pub use latent::{Basis, LatentCode, LatentPath};
pub use sobolev::MetricParams;

