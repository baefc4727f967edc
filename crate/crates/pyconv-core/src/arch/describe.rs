//! Human-readable stage tables for the classification and video networks.

use super::{
    classification_backbone_plan, BackbonePlan, ClassificationConfig, Downsampling, StagePlan,
    VideoConfig,
};
use crate::error::Result;
use crate::pyconv::PyConvLevel;

fn kernel_str(kernel: &[usize]) -> String {
    kernel
        .iter()
        .map(|k| k.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

fn level_str(level: &PyConvLevel) -> String {
    format!(
        "{}, {}, G={}",
        kernel_str(&level.kernel),
        level.out_channels,
        level.groups
    )
}

fn stage_cell(stage: &StagePlan) -> String {
    let mut lines = vec![format!("1x1, {}", stage.width)];
    if stage.levels.len() == 1 && stage.levels[0].groups == 1 {
        lines.push(level_str(&stage.levels[0]));
    } else {
        lines.push(format!("PyConv{}, {}:", stage.levels.len(), stage.width));
        // Top level first, mirroring the usual table layout.
        for level in stage.levels.iter().rev() {
            lines.push(format!("  {}", level_str(level)));
        }
    }
    lines.push(format!("1x1, {}", stage.out_channels));
    lines.join(" | ")
}

fn plan_table(plan: &BackbonePlan, input_spatial: &[usize], classes: usize) -> String {
    let mut rows: Vec<(String, String, String)> = Vec::new();
    let mut spatial: Vec<usize> = input_spatial
        .iter()
        .zip(&plan.stem_stride)
        .map(|(&e, &s)| e.div_ceil(s))
        .collect();
    rows.push((
        "stem".into(),
        spatial_str(&spatial),
        format!(
            "{}, {}, s={}",
            kernel_str(&plan.stem_kernel),
            plan.stem_out,
            plan.stem_stride.last().unwrap()
        ),
    ));
    if let Some(pool) = &plan.stem_pool {
        spatial = spatial
            .iter()
            .zip(&pool.stride)
            .map(|(&e, &s)| e.div_ceil(s))
            .collect();
        rows.push((
            String::new(),
            spatial_str(&spatial),
            format!("{} max pool, s={}", kernel_str(&pool.window), pool.stride.last().unwrap()),
        ));
    }
    for (i, stage) in plan.stages.iter().enumerate() {
        spatial = spatial
            .iter()
            .zip(&stage.first_stride)
            .map(|(&e, &s)| e.div_ceil(s))
            .collect();
        rows.push((
            format!("stage {}", i + 1),
            spatial_str(&spatial),
            format!("[{}] x{}", stage_cell(stage), stage.blocks),
        ));
    }
    rows.push((
        String::new(),
        spatial_str(&vec![1; spatial.len()]),
        format!("global avg pool | {classes}-d fc"),
    ));

    let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(5);
    let w1 = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max(6);
    let mut out = format!("{:<w0$}  {:<w1$}  layers\n", "stage", "output");
    for (a, b, c) in rows {
        out.push_str(&format!("{a:<w0$}  {b:<w1$}  {c}\n"));
    }
    out
}

fn spatial_str(spatial: &[usize]) -> String {
    spatial
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

/// Stage table for a classification network at the given input size.
pub fn classification_table(cfg: &ClassificationConfig, input_spatial: &[usize]) -> Result<String> {
    let plan = classification_backbone_plan(cfg)?;
    let mut header = format!(
        "{}-{} (schedule {:?}, {})\n",
        cfg.family.as_str(),
        cfg.depth,
        cfg.level_schedule,
        match cfg.downsampling {
            Downsampling::StemPool => "stem max pool",
            Downsampling::ShortcutMaxPool => "max pool on first shortcuts",
        }
    );
    header.push_str(&plan_table(&plan, input_spatial, cfg.num_classes));
    Ok(header)
}

/// Stage table for a video network at the given input size (T, H, W).
pub fn video_table(cfg: &VideoConfig, input_spatial: &[usize]) -> Result<String> {
    let plan = super::video_backbone_plan(cfg)?;
    let mut header = format!("{}3d-{}\n", cfg.family.as_str(), cfg.depth);
    header.push_str(&plan_table(&plan, input_spatial, cfg.num_classes));
    Ok(header)
}
