use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arch {
    Bicubic,
    EsrMax,
    EsrTm,
    EsrTr,
    EsrCnn,
    Espcn,
    Fsrcnn,
}

impl Arch {
    pub const ALL: [Arch; 7] = [
        Arch::Bicubic,
        Arch::EsrMax,
        Arch::EsrTm,
        Arch::EsrTr,
        Arch::EsrCnn,
        Arch::Espcn,
        Arch::Fsrcnn,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Arch::Bicubic => "Bicubic",
            Arch::EsrMax => "eSR-MAX",
            Arch::EsrTm => "eSR-TM",
            Arch::EsrTr => "eSR-TR",
            Arch::EsrCnn => "eSR-CNN",
            Arch::Espcn => "ESPCN",
            Arch::Fsrcnn => "FSRCNN",
        }
    }

    /// Name-grammar field letters after the leading `s`, in order.
    fn fields(self) -> &'static [char] {
        match self {
            Arch::Bicubic => &[],
            Arch::EsrMax | Arch::EsrTm | Arch::EsrTr => &['K', 'C'],
            Arch::EsrCnn => &['C', 'D', 'S'],
            Arch::Espcn => &['D', 'S'],
            Arch::Fsrcnn => &['D', 'S', 'M'],
        }
    }

    /// Channel groups the single conv layer feeds into the attention head.
    pub fn head_groups(self) -> usize {
        match self {
            Arch::EsrMax => 1,
            Arch::EsrTm | Arch::EsrCnn => 2,
            Arch::EsrTr => 3,
            _ => 0,
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Architecture plus hyper-parameters.
///
/// `kernel` is k (single-layer eSR models), `candidates` is C, `features` is D,
/// `hidden` is S and `mapping` is M. A field is `Some` exactly when the
/// architecture uses it.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelSpec {
    pub arch: Arch,
    pub scale: usize,
    pub kernel: Option<usize>,
    pub candidates: Option<usize>,
    pub features: Option<usize>,
    pub hidden: Option<usize>,
    pub mapping: Option<usize>,
}

impl ModelSpec {
    fn bare(arch: Arch, scale: usize) -> Self {
        ModelSpec {
            arch,
            scale,
            kernel: None,
            candidates: None,
            features: None,
            hidden: None,
            mapping: None,
        }
    }

    pub fn bicubic(scale: usize) -> Self {
        Self::bare(Arch::Bicubic, scale)
    }

    /// eSR-MAX, eSR-TM or eSR-TR.
    pub fn single_layer(arch: Arch, scale: usize, kernel: usize, candidates: usize) -> Self {
        ModelSpec {
            kernel: Some(kernel),
            candidates: Some(candidates),
            ..Self::bare(arch, scale)
        }
    }

    pub fn esr_cnn(scale: usize, candidates: usize, features: usize, hidden: usize) -> Self {
        ModelSpec {
            candidates: Some(candidates),
            features: Some(features),
            hidden: Some(hidden),
            ..Self::bare(Arch::EsrCnn, scale)
        }
    }

    pub fn espcn(scale: usize, features: usize, hidden: usize) -> Self {
        ModelSpec {
            features: Some(features),
            hidden: Some(hidden),
            ..Self::bare(Arch::Espcn, scale)
        }
    }

    pub fn fsrcnn(scale: usize, features: usize, hidden: usize, mapping: usize) -> Self {
        ModelSpec {
            features: Some(features),
            hidden: Some(hidden),
            mapping: Some(mapping),
            ..Self::bare(Arch::Fsrcnn, scale)
        }
    }

    fn field(&self, letter: char) -> Option<usize> {
        match letter {
            'K' => self.kernel,
            'C' => self.candidates,
            'D' => self.features,
            'S' => self.hidden,
            'M' => self.mapping,
            _ => None,
        }
    }

    fn field_mut(&mut self, letter: char) -> &mut Option<usize> {
        match letter {
            'K' => &mut self.kernel,
            'C' => &mut self.candidates,
            'D' => &mut self.features,
            'S' => &mut self.hidden,
            _ => &mut self.mapping,
        }
    }

    /// Checks the presence rules and legal ranges.
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::ModelName {
            name: self.to_string(),
            reason,
        };
        if self.scale < 2 {
            return Err(bad(format!("scale must be at least 2, got {}", self.scale)));
        }
        let used = self.arch.fields();
        for letter in ['K', 'C', 'D', 'S', 'M'] {
            match (used.contains(&letter), self.field(letter)) {
                (true, None) => return Err(bad(format!("missing field {letter}"))),
                (false, Some(_)) => {
                    return Err(bad(format!("field {letter} not used by {}", self.arch)))
                }
                _ => {}
            }
        }
        if let Some(k) = self.kernel {
            if k == 0 || k % 2 == 0 {
                return Err(bad(format!("kernel size must be odd and positive, got {k}")));
            }
        }
        if self.candidates == Some(0) {
            return Err(bad("C must be at least 1".into()));
        }
        if self.hidden == Some(0) {
            return Err(bad("S must be at least 1".into()));
        }
        if self.arch == Arch::Fsrcnn && self.features == Some(0) {
            return Err(bad("FSRCNN needs D of at least 1".into()));
        }
        Ok(())
    }

    pub fn candidates_or_one(&self) -> usize {
        self.candidates.unwrap_or(1)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_s{}", self.arch, self.scale)?;
        for &letter in self.arch.fields() {
            match self.field(letter) {
                Some(v) => write!(f, "_{letter}{v}")?,
                None => write!(f, "_{letter}?")?,
            }
        }
        Ok(())
    }
}

fn parse_number(name: &str, token: &str, letter: char) -> Result<usize> {
    let err = |reason: String| Error::ModelName {
        name: name.to_string(),
        reason,
    };
    let digits = token
        .strip_prefix(letter)
        .ok_or_else(|| err(format!("expected field {letter}, found `{token}`")))?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(err(format!("malformed token `{token}`")));
    }
    if digits.len() > 1 && digits.starts_with('0') {
        return Err(err(format!("non-canonical number in `{token}`")));
    }
    digits
        .parse()
        .map_err(|_| err(format!("number out of range in `{token}`")))
}

/// Parses registry names such as `eSR-TM_s2_K3_C4` or `FSRCNN_s3_D56_S12_M4`.
pub fn parse_model_name(name: &str) -> Result<ModelSpec> {
    let err = |reason: &str| Error::ModelName {
        name: name.to_string(),
        reason: reason.to_string(),
    };
    let mut tokens = name.split('_');
    let arch_token = tokens.next().unwrap_or_default();
    let arch = Arch::ALL
        .into_iter()
        .find(|a| a.token() == arch_token)
        .ok_or_else(|| err("unknown architecture"))?;
    let scale_token = tokens.next().ok_or_else(|| err("missing field s"))?;
    let mut spec = ModelSpec::bare(arch, parse_number(name, scale_token, 's')?);
    for &letter in arch.fields() {
        let token = tokens
            .next()
            .ok_or_else(|| err(&format!("missing field {letter}")))?;
        *spec.field_mut(letter) = Some(parse_number(name, token, letter)?);
    }
    if let Some(extra) = tokens.next() {
        return Err(err(&format!("unexpected trailing token `{extra}`")));
    }
    spec.validate()?;
    Ok(spec)
}

pub fn format_model_name(spec: &ModelSpec) -> String {
    spec.to_string()
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_model_name(s)
    }
}

impl Serialize for ModelSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        parse_model_name(&name).map_err(serde::de::Error::custom)
    }
}

/// Every configuration of the hyper-parameter sweep, for scales 2, 3 and 4.
pub fn model_grid() -> Vec<ModelSpec> {
    let mut grid = Vec::new();
    for scale in [2, 3, 4] {
        grid.extend(model_grid_for_scale(scale));
    }
    grid
}

pub fn model_grid_for_scale(scale: usize) -> Vec<ModelSpec> {
    let mut grid = vec![ModelSpec::bicubic(scale)];
    for arch in [Arch::EsrMax, Arch::EsrTm, Arch::EsrTr] {
        for kernel in [3, 5, 7] {
            for candidates in 1..=16 {
                grid.push(ModelSpec::single_layer(arch, scale, kernel, candidates));
            }
        }
    }
    for candidates in [2, 4, 6, 8] {
        for features in [1, 3, 5, 7, 9] {
            for hidden in [3, 6, 9, 12, 15] {
                grid.push(ModelSpec::esr_cnn(scale, candidates, features, hidden));
            }
        }
    }
    for features in [6, 19, 32, 44, 56] {
        for hidden in [1, 3, 6, 9, 12] {
            for mapping in [1, 4] {
                grid.push(ModelSpec::fsrcnn(scale, features, hidden, mapping));
            }
        }
    }
    for features in [0, 4, 6, 10, 12, 16, 28, 40, 52, 64] {
        for hidden in [3, 6, 9, 12, 15, 18, 21, 24, 27, 32] {
            grid.push(ModelSpec::espcn(scale, features, hidden));
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_registry_examples() {
        assert_eq!(parse_model_name("Bicubic_s2").unwrap(), ModelSpec::bicubic(2));
        assert_eq!(
            parse_model_name("eSR-TM_s2_K3_C4").unwrap(),
            ModelSpec::single_layer(Arch::EsrTm, 2, 3, 4)
        );
        assert_eq!(
            parse_model_name("FSRCNN_s3_D56_S12_M4").unwrap(),
            ModelSpec::fsrcnn(3, 56, 12, 4)
        );
        assert_eq!(
            parse_model_name("eSR-CNN_s4_C8_D3_S15").unwrap(),
            ModelSpec::esr_cnn(4, 8, 3, 15)
        );
    }

    #[test]
    fn rejects_malformed_names() {
        for bad in [
            "eSR-TM_s2_K3",
            "eSR-XX_s2_K3_C4",
            "eSR-TM_s2_C4_K3",
            "eSR-TM_s2_K3_C4_D1",
            "eSR-TM_s2_K03_C4",
            "eSR-TM_s2_Kx_C4",
            "Bicubic_s1",
            "Bicubic",
            "eSR-MAX_s2_K4_C1",
            "eSR-MAX_s2_K3_C0",
            "",
        ] {
            assert!(
                matches!(parse_model_name(bad), Err(Error::ModelName { .. })),
                "{bad} parsed"
            );
        }
        let msg = parse_model_name("eSR-TM_s2_K3").unwrap_err().to_string();
        assert!(msg.contains("missing field C"), "{msg}");
    }

    #[test]
    fn grid_has_pool_size() {
        assert_eq!(model_grid_for_scale(2).len(), 395);
        assert_eq!(model_grid().len(), 1185);
    }

    #[test]
    fn espcn_without_first_stage_is_legal() {
        assert!(parse_model_name("ESPCN_s2_D0_S3").is_ok());
    }
}
