//! Magnitude / cosine / sign decomposition of angle-delay CSI, partial sign
//! feedback, bit accounting, and the magnitude-dependent phase quantizer.

mod budget;
mod mdpq;
mod signs;

pub use budget::{codeword_len, phase_bit_budget, selected_count, BitBudget};
pub use mdpq::{mdpq_bits_per_entry, mdpq_decode, mdpq_encode, MdpqTable};
pub use signs::{
    decompose, place_sign_bits, rank_order, recombine, select_signs, sign_bits, CosineMatrix, MagnitudeMatrix,
    SignMatrix,
};
