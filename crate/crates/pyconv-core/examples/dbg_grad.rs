use pyconv_core::arch::{build_classification, ClassificationConfig, Family};
use pyconv_core::graph::Mode;
use pyconv_core::rng::derive_seed;
use pyconv_core::Tensor;

fn main() {
    let cfg = ClassificationConfig { seed: 42, ..ClassificationConfig::toy(Family::ResNetBaseline, 50) };
    let mut net = build_classification::<f64>(&cfg).unwrap();
    let input = Tensor::he_normal(&[8, 1, 32, 32], 4, 301).unwrap();
    let exec = net.forward(&[&input], Mode::GradCheck, 0).unwrap();
    let frozen = net.freeze(&exec);
    let id = net.output_id("logits").unwrap();
    let lw = Tensor::<f64>::he_normal(exec.value(id).dims(), 2, derive_seed(1, "loss.logits")).unwrap();
    let grads = net.backward(&exec, &[("logits", lw.clone())]).unwrap();
    drop(exec);
    let loss = |net: &mut pyconv_core::Network64| -> f64 {
        let ex = net.forward_frozen(&[&input], Mode::GradCheck, 0, &frozen).unwrap();
        let id = net.output_id("logits").unwrap();
        ex.value(id).data().iter().zip(lw.data()).map(|(&a, &b)| a * b).sum()
    };
    println!("loss at ref = {:.6e}", loss(&mut net));
    let name = "stem.bn.beta";
    for index in 0..4usize {
        let orig = net.params[name].data()[index];
        let an = grads.params[name].data()[index];
        for eps in [1e-3, 1e-4, 1e-5, 1e-6] {
            net.params.get_mut(name).unwrap().data_mut()[index] = orig + eps;
            let p = loss(&mut net);
            net.params.get_mut(name).unwrap().data_mut()[index] = orig - eps;
            let m = loss(&mut net);
            net.params.get_mut(name).unwrap().data_mut()[index] = orig;
            let fd = (p - m) / (2.0 * eps);
            println!("idx {index} eps {eps:.0e}: fd {fd:+.9e} an {an:+.9e} rel {:.3e}", (fd-an).abs()/fd.abs().max(an.abs()).max(1e-6));
        }
    }
}
