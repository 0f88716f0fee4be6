use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, UlaGeometry};
use crate::error::{Error, Result};
use crate::ofdm::OfdmParams;
use crate::pa::PaModel;
use crate::precoders::{Precoder, QamConstellation, SlpConfig};
use crate::sigma_delta::Scheme;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default = "default_spacing")]
    pub d_over_lambda: f64,
    #[serde(default)]
    pub ofdm: OfdmParams,
    #[serde(default)]
    pub channel: ChannelConfig,
    /// QAM order parameter: the constellation has `4 D^2` points.
    #[serde(rename = "D", default = "default_d")]
    pub d: usize,
}

fn default_spacing() -> f64 {
    0.125
}
fn default_d() -> usize {
    2
}

impl SystemConfig {
    pub fn geometry(&self) -> Result<UlaGeometry> {
        UlaGeometry::new(self.n, self.d_over_lambda)
    }

    pub fn constellation(&self) -> Result<QamConstellation> {
        QamConstellation::new(self.d)
    }
}

/// PA block with the modulator bound `chi` (defaults to `r_max`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaConfig {
    #[serde(flatten)]
    pub model: PaModel,
    #[serde(default)]
    pub chi: Option<f64>,
}

impl Default for PaConfig {
    fn default() -> Self {
        Self {
            model: PaModel::rapp_3gpp(),
            chi: None,
        }
    }
}

impl PaConfig {
    pub fn chi(&self) -> f64 {
        self.chi.unwrap_or(self.model.r_max)
    }
}

/// Scheme applied to arms that do not name one. `auto` picks the
/// transmit chain conventionally paired with each precoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemeSelector {
    #[default]
    #[serde(with = "auto_tag")]
    Auto,
    Fixed(Scheme),
}

mod auto_tag {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let v = String::deserialize(d)?;
        if v == "auto" {
            Ok(())
        } else {
            Err(serde::de::Error::custom("expected \"auto\""))
        }
    }
}

/// One simulated curve: a precoder, the transmit chain behind it and a label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arm {
    pub precoder: Precoder,
    pub scheme: Scheme,
    pub label: String,
}

impl Arm {
    pub fn new(precoder: Precoder, scheme: Option<Scheme>) -> Self {
        let default = default_scheme(precoder);
        let scheme = scheme.unwrap_or(default);
        let label = if scheme == default {
            precoder.as_str().to_string()
        } else {
            format!("{}/{}", precoder.as_str(), scheme.as_str())
        };
        Self { precoder, scheme, label }
    }
}

/// Pairing used for the benchmark table: sigma-delta precoders run the
/// matching modulator, back-off and total-power designs drive the PAs
/// directly with a linear last antenna, and references use ideal PAs.
pub fn default_scheme(p: Precoder) -> Scheme {
    match p {
        Precoder::ZfSd | Precoder::SlpSd => Scheme::Sd1,
        Precoder::ZfTsd | Precoder::SlpTsd => Scheme::Tsd1,
        Precoder::ZfBo | Precoder::ZfTp | Precoder::SlpBo => Scheme::NoneTail,
        Precoder::ZfRef | Precoder::SlpRef => Scheme::None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArmSpec {
    Name(Precoder),
    Full {
        precoder: Precoder,
        #[serde(default)]
        scheme: Option<Scheme>,
        #[serde(default)]
        label: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecoderConfig {
    pub arms: Vec<ArmSpec>,
    #[serde(default)]
    pub slp: SlpConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Grid of `1 / sigma_v^2` in dB.
    pub snr_db: Vec<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { snr_db: vec![0.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    #[serde(default = "default_angles")]
    pub angles_deg: Vec<f64>,
    /// Number of time instants (frame columns) averaged.
    #[serde(default = "default_frames")]
    pub frames: usize,
}

fn default_angles() -> Vec<f64> {
    (0..=18).map(|k| 5.0 * k as f64).collect()
}
fn default_frames() -> usize {
    2000
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            angles_deg: default_angles(),
            frames: default_frames(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_blocks")]
    pub blocks_per_trial: usize,
    #[serde(default)]
    pub seed: u64,
    /// Subcarrier shown in scatter output.
    #[serde(default)]
    pub scatter_subcarrier: usize,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
}

fn default_trials() -> usize {
    100
}
fn default_blocks() -> usize {
    10
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            trials: default_trials(),
            blocks_per_trial: default_blocks(),
            seed: 0,
            scatter_subcarrier: 0,
            spectrum: SpectrumConfig::default(),
        }
    }
}

/// Full experiment description, one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub pa: PaConfig,
    #[serde(default)]
    pub scheme: SchemeSelector,
    pub precoder: PrecoderConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn arms(&self) -> Vec<Arm> {
        let fallback = match self.scheme {
            SchemeSelector::Auto => None,
            SchemeSelector::Fixed(s) => Some(s),
        };
        self.precoder
            .arms
            .iter()
            .map(|spec| match spec {
                ArmSpec::Name(p) => Arm::new(*p, fallback),
                ArmSpec::Full { precoder, scheme, label } => {
                    let mut arm = Arm::new(*precoder, scheme.or(fallback));
                    if let Some(l) = label {
                        arm.label = l.clone();
                    }
                    arm
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let sys = &self.system;
        sys.geometry()?;
        sys.constellation()?;
        sys.ofdm.validate()?;
        sys.channel.validate(&sys.ofdm)?;
        if sys.k == 0 || sys.k > sys.n {
            return Err(Error::InvalidParameter(format!("need 1 <= K <= N (K = {}, N = {})", sys.k, sys.n)));
        }
        if sys.ofdm.m_cp > sys.ofdm.m {
            return Err(Error::InvalidParameter("M_cp must not exceed M".into()));
        }
        self.pa.model.validate()?;
        if !(self.pa.chi() > 0.0) {
            return Err(Error::InvalidParameter("chi must be positive".into()));
        }
        if self.precoder.arms.is_empty() {
            return Err(Error::InvalidParameter("at least one precoder arm is required".into()));
        }
        self.precoder.slp.validate()?;
        if self.run.trials == 0 || self.run.blocks_per_trial == 0 {
            return Err(Error::InvalidParameter("trials and blocks_per_trial must be >= 1".into()));
        }
        if self.noise.snr_db.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("SNR grid must be finite".into()));
        }
        if self.run.scatter_subcarrier >= sys.ofdm.m_s {
            return Err(Error::InvalidParameter("scatter subcarrier outside 0..M_s".into()));
        }
        let mut labels: Vec<&str> = Vec::new();
        let arms = self.arms();
        for arm in &arms {
            if labels.contains(&arm.label.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate arm label '{}'", arm.label)));
            }
            labels.push(&arm.label);
            if arm.scheme.linear_tail() >= sys.n {
                return Err(Error::InvalidParameter(format!("scheme {} needs more antennas", arm.scheme.as_str())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "system": {"N": 16, "K": 4, "ofdm": {"M": 64, "M_s": 40, "M_cp": 20, "osf": 7}},
        "pa": {"kind": "modified_rapp", "A": 16.0, "r_max": 0.1187, "phi": 1.1, "zeta": 4.0, "B": -345.0, "C": 0.17},
        "precoder": {"arms": ["zf-tsd", {"precoder": "zf-sd", "scheme": "none"}, {"precoder": "slp-bo", "label": "bo"}]},
        "noise": {"snr_db": [0, 5, 10]},
        "run": {"trials": 3, "seed": 7}
    }"#;

    #[test]
    fn parses_sample_and_resolves_arms() {
        let cfg: ExperimentConfig = serde_json::from_str(SAMPLE).unwrap();
        cfg.validate().unwrap();
        let arms = cfg.arms();
        assert_eq!(arms[0], Arm { precoder: Precoder::ZfTsd, scheme: Scheme::Tsd1, label: "zf-tsd".into() });
        assert_eq!(arms[1].label, "zf-sd/none");
        assert_eq!(arms[2].scheme, Scheme::NoneTail);
        assert_eq!(arms[2].label, "bo");
        assert_eq!(cfg.scheme, SchemeSelector::Auto);
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn fixed_scheme_applies_to_bare_arms() {
        let text = SAMPLE.replace("\"precoder\": {", "\"scheme\": \"sd2\", \"precoder\": {");
        let cfg: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg.arms()[0].scheme, Scheme::Sd2);
        assert_eq!(cfg.arms()[1].scheme, Scheme::None);
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg: ExperimentConfig = serde_json::from_str(SAMPLE).unwrap();
        cfg.system.k = 17;
        assert!(cfg.validate().is_err());
        let text = SAMPLE.replace("\"trials\": 3", "\"trails\": 3");
        assert!(serde_json::from_str::<ExperimentConfig>(&text).is_err());
    }
}
