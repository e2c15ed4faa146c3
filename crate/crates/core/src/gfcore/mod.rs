//! Exact linear algebra over F_p and over the integers.

mod fp;
mod int;
mod prime;

pub use fp::{kernel_count, rank_mod_p, rank_of_counts, Echelon, FpMatrix};
pub(crate) use fp::rank_of_counts_m31;
pub use int::{rank_integer, rank_multimodular, IntMatrix};
pub use prime::{is_prime, random_prime, PrimeModulus};
