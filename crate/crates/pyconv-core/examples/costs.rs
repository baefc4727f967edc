use pyconv_core::analyzer::analyze;
use pyconv_core::arch::*;

fn main() {
    for (family, depth) in [
        (Family::ResNetBaseline, 50), (Family::ResNetBaseline, 101), (Family::ResNetBaseline, 152),
        (Family::PyConvResNet, 50), (Family::PyConvResNet, 101), (Family::PyConvResNet, 152),
        (Family::PyConvHGResNet, 50),
    ] {
        let cfg = ClassificationConfig::new(family, depth);
        let net = build_classification::<f32>(&cfg).unwrap();
        let r = analyze(&net, &[vec![1, 3, 224, 224]]).unwrap();
        println!("{:<18} {:>3}  params {:>10} = {:.4}M  flops {:.4}G", family.as_str(), depth, r.total_params, r.params_millions(), r.flops_giga());
    }
    // Ablation schedules (baseline downsampling scheme)
    for (sched, down) in [
        ([1usize,1,1,1], Downsampling::StemPool),
        ([2,2,2,1], Downsampling::StemPool),
        ([3,3,2,1], Downsampling::StemPool),
        ([4,3,2,1], Downsampling::StemPool),
        ([5,4,3,2], Downsampling::StemPool),
        ([4,3,2,1], Downsampling::ShortcutMaxPool),
    ] {
        let mut cfg = ClassificationConfig::new(Family::PyConvResNet, 50);
        cfg.level_schedule = sched;
        cfg.downsampling = down;
        let net = build_classification::<f32>(&cfg).unwrap();
        let r = analyze(&net, &[vec![1, 3, 224, 224]]).unwrap();
        println!("pyconv50 {:?} {:?}  params {:.4}M  flops {:.4}G", sched, down, r.params_millions(), r.flops_giga());
    }
    {
        let mut cfg = ClassificationConfig::new(Family::PyConvResNetTop, 50);
        cfg.downsampling = Downsampling::StemPool;
        let net = build_classification::<f32>(&cfg).unwrap();
        let r = analyze(&net, &[vec![1, 3, 224, 224]]).unwrap();
        println!("top(4,3,2,1)  params {:.4}M  flops {:.4}G", r.params_millions(), r.flops_giga());
    }
    // Segmentation
    for os in [8usize, 16] {
        let cfg = SegmentationConfig::new(50, 150, os);
        let net = build_segmentation::<f32>(&cfg).unwrap();
        let r = analyze(&net, &[vec![1, 3, 473, 473]]).unwrap();
        println!("segnet os={os}  params {:.4}M  flops {:.4}G", r.params_millions(), r.flops_giga());
    }
    // Detection
    {
        let cfg = DetectionConfig::new(50, 81);
        let (net, maps) = build_detection::<f32>(&cfg).unwrap();
        let r = analyze(&net, &[vec![1, 3, 300, 300]]).unwrap();
        let anchors: usize = maps.iter().map(|m| m.spatial.iter().product::<usize>() * m.boxes_per_cell).sum();
        println!("pyconvssd50  params {:.4}M  flops {:.4}G  anchors {anchors}", r.params_millions(), r.flops_giga());
    }
    // Video
    for family in [Family::ResNetBaseline, Family::PyConvResNet] {
        let cfg = VideoConfig::new(family, 50);
        let net = build_video::<f32>(&cfg).unwrap();
        let r = analyze(&net, &[vec![1, 3, 16, 224, 224]]).unwrap();
        println!("video {:<14} params {:>10} = {:.4}M  flops {:.4}G", family.as_str(), r.total_params, r.params_millions(), r.flops_giga());
    }
}
