//! Triangle meshes, OBJ I/O, the uniform graph Laplacian and camera projection.

pub mod laplacian;
pub mod obj;
pub mod projection;
pub mod trimesh;

pub use laplacian::{graph_laplacian, CsrMatrix};
pub use obj::{load_obj, obj_string, parse_obj, save_obj};
pub use projection::{Camera, Projection};
pub use trimesh::{load_landmark_ids, save_landmark_ids, TriMesh};
