//! Wave equation `dtt phi - lap phi = -mu`: a leapfrog grid solver for the
//! coupled loop and pointwise light-cone formulas used as its oracle.

pub mod grid;
pub mod kirchhoff;
pub mod retarded;
pub mod view;

pub use grid::{check_cfl, FieldDerivatives, FieldGrid, GridWindow, Lattice};
pub use kirchhoff::{data_term_dt_phi, kirchhoff_homogeneous, DataTerm, KirchhoffRule};
pub use retarded::{retarded_potential, FnSource, GridSourceHistory, SourceHistory};
pub use view::{FieldSnapshot, SnapshotSeries};
