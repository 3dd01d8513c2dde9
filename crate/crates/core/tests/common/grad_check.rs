use tendon_core::nn::Mlp;

fn close(analytic: f64, fd: f64) -> bool {
    (analytic - fd).abs() <= 1e-4 * analytic.abs().max(fd.abs()) + 1e-8
}

fn objective(net: &Mlp, x: &[f64], c: &[f64]) -> f64 {
    net.forward(x)
        .unwrap()
        .iter()
        .zip(c)
        .map(|(y, c)| y * c)
        .sum()
}

/// Central-difference check of every parameter and input component.
pub fn check_gradients(net: &Mlp, x: &[f64], c: &[f64]) -> Result<(), String> {
    const H: f64 = 1e-5;
    let g = net.gradients(x, c).map_err(|e| e.to_string())?;
    for i in 0..x.len() {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += H;
        xm[i] -= H;
        let fd = (objective(net, &xp, c) - objective(net, &xm, c)) / (2.0 * H);
        if !close(g.input[i], fd) {
            return Err(format!("input {i}: {} vs fd {fd}", g.input[i]));
        }
    }
    for layer in 0..net.num_layers() {
        for k in 0..net.weights(layer).len() {
            let mut p = net.clone();
            p.weights_mut(layer)[k] += H;
            let mut m = net.clone();
            m.weights_mut(layer)[k] -= H;
            let fd = (objective(&p, x, c) - objective(&m, x, c)) / (2.0 * H);
            if !close(g.weights[layer][k], fd) {
                return Err(format!(
                    "w[{layer}][{k}]: {} vs fd {fd}",
                    g.weights[layer][k]
                ));
            }
        }
        for k in 0..net.biases(layer).len() {
            let mut p = net.clone();
            p.biases_mut(layer)[k] += H;
            let mut m = net.clone();
            m.biases_mut(layer)[k] -= H;
            let fd = (objective(&p, x, c) - objective(&m, x, c)) / (2.0 * H);
            if !close(g.biases[layer][k], fd) {
                return Err(format!(
                    "b[{layer}][{k}]: {} vs fd {fd}",
                    g.biases[layer][k]
                ));
            }
        }
    }
    Ok(())
}
