//! Latent text-to-UI diffusion with a zero-initialized control branch fed by
//! the layout wireframe.

mod config;
mod generate;
mod model;
mod net;
mod schedule;
mod text;
mod train;

pub use config::UiModelConfig;
pub use generate::{generate_base, generate_ui, DEFAULT_STEPS};
pub use model::{
    CheckpointMeta, UiModel, CHECKPOINT_KIND, CONTROL_CHECKPOINT_KIND, CONTROL_PREFIX,
    FROZEN_COMPONENTS,
};
pub use net::{Codec, ControlBranch, Denoiser, DecoderHalf, EncoderHalf, Features};
pub use schedule::{NoiseSchedule, ScheduleConfig};
pub use text::{TextEncoder, TextTokenizer, PAD_TOKEN};
pub use train::{
    base_mse, control_mse, finetune_control, pretrain_toy, FinetuneConfig, FinetuneLog,
    PretrainConfig, PretrainLog, PretrainPhase,
};

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device, Tensor};
    use uidiff_core::{BBox, ComponentCategory, Layout};

    fn mini() -> UiModel {
        UiModel::new(UiModelConfig::miniature(), 7, DType::F32, &Device::Cpu).unwrap()
    }

    fn layout() -> Layout {
        Layout::with_elements(
            32,
            64,
            [
                (ComponentCategory::TOOLBAR, BBox::new(0.0, 0.0, 1.0, 0.2)),
                (ComponentCategory::TEXT_BUTTON, BBox::new(0.2, 0.6, 0.6, 0.2)),
            ],
        )
    }

    #[test]
    fn fresh_control_reproduces_base() {
        let m = mini();
        for seed in 0..3 {
            let a = generate_ui(&m, "a login page", &layout(), seed, 5).unwrap();
            let b = generate_base(&m, "a login page", seed, 5).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn one_nonzero_injection_weight_changes_output() {
        let m = mini();
        let before = generate_ui(&m, "x", &layout(), 1, 4).unwrap();
        m.store.set_scalar("control.zero_mid.bias", 0, 0.5).unwrap();
        let after = generate_ui(&m, "x", &layout(), 1, 4).unwrap();
        assert_ne!(before, after);
    }

    #[test]
    fn control_encoder_starts_as_a_copy() {
        let m = mini();
        let a = m.store.get("unet.enc.res1.conv1.weight").unwrap();
        let b = m.store.get("control.enc.res1.conv1.weight").unwrap();
        let d = (a - b).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f32>().unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn checkpoint_round_trip_and_tamper_detection() {
        let m = mini();
        m.store.set_scalar("control.zero0.bias", 1, 0.25).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ui.safetensors");
        m.save(&p).unwrap();
        let back = UiModel::load(&p, &Device::Cpu).unwrap();
        assert_eq!(back.frozen_hashes().unwrap(), m.frozen_hashes().unwrap());
        assert_eq!(back.control_hash().unwrap(), m.control_hash().unwrap());
        assert!(back.store.vars_with_prefix("unet.").is_empty());
        assert_eq!(
            generate_ui(&back, "x", &layout(), 3, 3).unwrap(),
            generate_ui(&m, "x", &layout(), 3, 3).unwrap()
        );

        let cp = dir.path().join("control.safetensors");
        m.save_control(&cp).unwrap();
        let other = UiModel::new(UiModelConfig::miniature(), 8, DType::F32, &Device::Cpu).unwrap();
        let mut other = other.freeze_base().unwrap();
        assert!(matches!(
            other.load_control(&cp),
            Err(crate::ModelError::CheckpointMismatch { .. })
        ));
        let mut same = UiModel::load(&p, &Device::Cpu).unwrap();
        same.reset_control(0).unwrap();
        same.load_control(&cp).unwrap();
        assert_eq!(same.control_hash().unwrap(), m.control_hash().unwrap());
    }

    #[test]
    fn autoencode_shapes() {
        let m = UiModel::new(UiModelConfig::toy(), 1, DType::F32, &Device::Cpu).unwrap();
        let img = image::RgbImage::from_pixel(288, 512, image::Rgb([200, 10, 10]));
        let (z, rec) = m.autoencode(&img).unwrap();
        assert_eq!(z.dims(), &[4, 64, 36]);
        assert_eq!(rec.dimensions(), (288, 512));
        let (z2, rec2) = m.autoencode(&img).unwrap();
        assert_eq!(rec, rec2);
        let d = (z - z2).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f32>().unwrap();
        assert_eq!(d, 0.0);
        assert!(m.autoencode(&image::RgbImage::new(10, 10)).is_err());
    }

    #[test]
    fn text_embeddings_are_cached_and_stable() {
        let m = mini();
        let a = m.encode_text("").unwrap();
        assert_eq!(a.dims(), &[1, 3, 4]);
        let b = m.encode_text("A nice screenshot of a mobile app").unwrap();
        let c = m.encode_text("A nice screenshot of a mobile app").unwrap();
        let d = (b - c).unwrap().abs().unwrap().sum_all().unwrap().to_scalar::<f32>().unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn shape_errors() {
        let m = mini();
        let z = Tensor::zeros((1, 2, 4, 4), DType::F32, &Device::Cpu).unwrap();
        let text = m.encode_text("x").unwrap();
        let wf = Tensor::zeros((1, 3, 64, 32), DType::F32, &Device::Cpu).unwrap();
        assert!(matches!(
            m.control_denoise_step(&z, &[1], &text, &wf),
            Err(crate::ModelError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn missing_adapter_weights() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            UiModel::from_adapter(dir.path(), &Device::Cpu),
            Err(crate::ModelError::AdapterUnavailable(_))
        ));
    }
}
