//! Model checkpoint assembly: one file holds the frozen codec sections,
//! the denoiser sections, and the self-describing meta sections (schedule,
//! architecture, training mode), so sampling needs nothing else.

use std::path::Path;

use zippo_core::checkpoint::{self, Section};

use crate::codec::Codec;
use crate::error::Result;
use crate::schedule::NoiseSchedule;
use crate::trainer::TaskMode;
use crate::unet::UNet;

pub struct LoadedModel {
    pub unet: UNet,
    pub codec: Codec,
    pub schedule: NoiseSchedule,
    pub mode: TaskMode,
}

pub fn save_model(
    path: &Path,
    unet: &UNet,
    codec: &Codec,
    schedule: &NoiseSchedule,
    mode: TaskMode,
) -> Result<()> {
    let mut sections = Vec::new();
    sections.push(schedule.meta_section());
    sections.push(Section::new("meta.mode", vec![1], vec![mode.index() as f32]));
    sections.extend(unet.sections());
    sections.extend(codec.sections());
    checkpoint::save(path, &sections)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<LoadedModel> {
    let sections = checkpoint::load(path)?;
    let schedule = NoiseSchedule::from_meta_section(checkpoint::find(&sections, "meta.schedule")?)?;
    let mode_section = checkpoint::find(&sections, "meta.mode")?;
    let mode = TaskMode::from_index(mode_section.data[0] as usize)?;
    let unet = UNet::from_sections(&sections)?;
    let codec = Codec::from_sections(&sections)?;
    Ok(LoadedModel {
        unet,
        codec,
        schedule,
        mode,
    })
}

pub fn save_codec(path: &Path, codec: &Codec) -> Result<()> {
    checkpoint::save(path, &codec.sections())?;
    Ok(())
}

pub fn load_codec(path: &Path) -> Result<Codec> {
    let sections = checkpoint::load(path)?;
    Codec::from_sections(&sections)
}
