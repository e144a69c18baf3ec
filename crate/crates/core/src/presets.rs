//! Reference layouts and parameter vectors used by the simulation and design workflows.

use crate::regression::{Dataset, GroupRecord, Theta};

/// Three groups inspected at `τ = 1` with 15, 20 and 25 devices and stresses
/// `(0.2, 0.4)`, `(0.3, 0.6)`, `(0.4, 0.8)`. Failure counts are zero.
///
/// The second stress is twice the first in every group, so only `a₁ + 2a₂` and
/// `b₁ + 2b₂` are identified from data on this layout.
pub fn simulation_layout() -> Dataset {
    let rows = [(15, [0.2, 0.4]), (20, [0.3, 0.6]), (25, [0.4, 0.8])];
    Dataset::new(rows.iter().map(|(k, x)| GroupRecord { tau: 1.0, k: *k, n: 0, x: x.to_vec() }).collect())
        .expect("valid layout")
}

/// Four groups with non-proportional stresses and distinct inspection times, on which all
/// four coefficients are identified.
pub fn identifiable_layout() -> Dataset {
    let rows = [
        (1.0, 15, [0.2, 0.4]),
        (1.5, 20, [0.4, 0.3]),
        (2.0, 25, [0.6, 0.2]),
        (2.5, 20, [0.8, 0.5]),
    ];
    Dataset::new(rows.iter().map(|(t, k, x)| GroupRecord { tau: *t, k: *k, n: 0, x: x.to_vec() }).collect())
        .expect("valid layout")
}

/// Five groups of 8, 12, 16, 20 and 24 devices for inspection-time design. Inspection
/// times are placeholders (`τ = 1`) to be replaced by the design search.
pub fn design_layout() -> Dataset {
    let rows = [(8, [20.0, 40.0]), (12, [30.0, 60.0]), (16, [40.0, 80.0]), (20, [30.0, 40.0]), (24, [20.0, 50.0])];
    Dataset::new(rows.iter().map(|(k, x)| GroupRecord { tau: 1.0, k: *k, n: 0, x: x.to_vec() }).collect())
        .expect("valid layout")
}

fn theta(v: [f64; 4]) -> Theta {
    Theta::from_flat(&v).expect("finite preset")
}

/// Parameter sets for simulation: `θ₁`, `θ₂`, `θ₃`.
pub fn simulation_thetas() -> [Theta; 3] {
    [theta([0.2, -0.6, -0.2, 0.4]), theta([0.4, 0.3, -0.1, -0.2]), theta([-0.06, -0.06, 0.4, -0.1])]
}

/// Contamination shifts paired with [`simulation_thetas`].
pub fn contamination_shifts() -> [[f64; 4]; 3] {
    [[0.02, -0.09, -0.07, -0.01], [-0.07, 0.06, -0.05, 0.03], [0.00, -0.07, 0.07, 0.05]]
}

/// Planning values for inspection-time design: `θ₁`, `θ₂`.
pub fn design_thetas() -> [Theta; 2] {
    [theta([0.2, -0.6, -0.2, 0.4]), theta([-0.3, -0.1, -0.2, 0.1])]
}

/// Starting value used for the bundled gallbladder data.
pub fn seer_start() -> Theta {
    theta([-4.46, 0.08, -0.21, 0.34])
}

/// The bundled gallbladder data set.
pub fn seer_data() -> Dataset {
    crate::cli::io::read_dataset_str(crate::SEER_GALLBLADDER_CSV).expect("bundled CSV is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_are_consistent() {
        assert_eq!(simulation_layout().total_k(), 60);
        assert_eq!(design_layout().total_k(), 80);
        assert_eq!(identifiable_layout().len(), 4);
        let seer = seer_data();
        assert_eq!(seer.total_k(), 287);
        assert_eq!(seer.counts(), vec![12, 10, 32, 42, 61, 64]);
    }
}
