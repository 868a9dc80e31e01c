use crate::eigh::eigh;
use crate::hermitian::HermitianBlock;

/// Frobenius-nearest PSD matrix: clip negative eigenvalues to zero.
pub fn nearest_psd(block: &HermitianBlock) -> HermitianBlock {
    let e = eigh(block);
    if e.min() >= 0.0 {
        return block.clone();
    }
    HermitianBlock::hermitian_part(&e.reconstruct_with(|l| l.max(0.0)))
}

/// Smallest eigenvalue; `+inf` for an empty block.
pub fn min_eigenvalue(block: &HermitianBlock) -> f64 {
    if block.dim() == 0 {
        return f64::INFINITY;
    }
    eigh(block).min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermitian::C64;

    #[test]
    fn psd_input_unchanged() {
        let mut h = HermitianBlock::scaled_identity(2, 2.0);
        h.set(0, 1, C64::new(0.5, -0.5));
        assert_eq!(nearest_psd(&h), h);
    }

    #[test]
    fn clips_negative_diagonal() {
        let h = HermitianBlock::from_real_diagonal(&[1.0, -2.0]);
        let p = nearest_psd(&h);
        assert!((p.get(0, 0).re - 1.0).abs() < 1e-15);
        assert!(p.get(1, 1).re.abs() < 1e-15);
        assert!(p.get(0, 1).norm() < 1e-15);
        assert!(min_eigenvalue(&p) >= -1e-12);
    }
}
