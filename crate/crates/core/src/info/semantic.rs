use crate::error::{contract, Result};

/// `h(p) = -p log2 p - (1-p) log2 (1-p)`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |x: f64| if x > 0.0 { -x * x.log2() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// Mean binary entropy of clause context values.
pub fn semantic_entropy(contexts: &[f64]) -> Result<f64> {
    if contexts.is_empty() {
        return Err(contract("semantic entropy of an empty clause set"));
    }
    if let Some(p) = contexts.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(contract(format!("context value {p} outside [0, 1]")));
    }
    Ok(contexts.iter().map(|&p| binary_entropy(p)).sum::<f64>() / contexts.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(semantic_entropy(&[1.0]).unwrap(), 0.0);
        assert!((semantic_entropy(&[0.5]).unwrap() - 1.0).abs() < 1e-15);
        assert!((semantic_entropy(&[1.0, 0.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!((semantic_entropy(&[0.5, 1.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(semantic_entropy(&[1.2]).is_err());
        assert!(semantic_entropy(&[-0.1]).is_err());
        assert!(semantic_entropy(&[]).is_err());
    }
}
