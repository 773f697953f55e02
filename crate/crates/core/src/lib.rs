pub mod channel;
pub mod constellation;
pub mod error;
pub mod exact_llr;
pub mod numeric;
pub mod special;
pub mod approx_llr;
pub mod llr_density;
pub mod density_evolution;
pub mod ldpc;
pub mod bicm_sim;
pub mod cli;
