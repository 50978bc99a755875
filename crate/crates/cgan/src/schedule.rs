/// Cosine-annealed learning rate at step `step_c` of `step_f`.
///
/// Written as a convex combination so both endpoints are returned exactly.
/// Steps past `step_f` stay at `eta_min`.
pub fn lr_schedule(step_c: usize, step_f: usize, eta_min: f64, eta_max: f64) -> f64 {
    if step_c >= step_f {
        return if step_f == 0 { eta_max } else { eta_min };
    }
    let c = 0.5 * (1.0 + (std::f64::consts::PI * step_c as f64 / step_f as f64).cos());
    eta_min * (1.0 - c) + eta_max * c
}
