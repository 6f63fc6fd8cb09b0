pub mod domain_mesh;
pub mod energy_forms;
pub mod geom_kernel;
pub mod harmonic_solver;
pub mod model;
pub mod qc_degree;
pub mod tangent_analysis;
pub mod target_surface;
