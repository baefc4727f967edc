use pyconv_core::arch::{build_classification, ClassificationConfig, Family};
use pyconv_core::graph::{Mode, NodeOp};
use pyconv_core::Tensor;

fn main() {
    for batch in [2usize, 8] {
        let cfg = ClassificationConfig { seed: 42, ..ClassificationConfig::toy(Family::ResNetBaseline, 50) };
        let mut net = build_classification::<f64>(&cfg).unwrap();
        let input = Tensor::he_normal(&[batch, 1, 32, 32], 4, 301).unwrap();
        let exec = net.forward(&[&input], Mode::GradCheck, 0).unwrap();
        let mut min_var = f64::INFINITY;
        let mut min_at = String::new();
        let mut max_out = 0.0f64;
        for (id, node) in net.nodes.iter().enumerate() {
            if let NodeOp::BatchNorm { .. } = node.op {
                let x = exec.value(node.inputs[0]);
                let (n, c) = (x.dims()[0], x.dims()[1]);
                let plane: usize = x.dims()[2..].iter().product();
                for ch in 0..c {
                    let mut vals = Vec::new();
                    for img in 0..n {
                        vals.extend_from_slice(&x.data()[(img*c+ch)*plane..(img*c+ch+1)*plane]);
                    }
                    let m: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
                    let v: f64 = vals.iter().map(|x| (x-m)*(x-m)).sum::<f64>() / vals.len() as f64;
                    if v < min_var { min_var = v; min_at = format!("{} ch{}", node.name, ch); }
                }
            }
            let m = exec.value(id).data().iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            max_out = max_out.max(m);
        }
        let logits = exec.value(net.output_id("logits").unwrap());
        println!("batch {batch}: min BN input var {min_var:.3e} at {min_at}; max |activation| {max_out:.3e}; max |logit| {:.3e}",
                 logits.data().iter().fold(0.0f64, |a, &b| a.max(b.abs())));
    }
}
