//! Uncompressed little-endian DICOM: parsing, typed access, pixel extraction
//! and a fixture writer.

mod dict;
mod parse;
mod pixels;
mod write;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub use self::dict::implicit_vr;
pub use self::parse::parse_dicom;
pub use self::pixels::{extract_pixels, SliceGeometry};
pub use self::write::{encode_dataset, fixture_dataset, write_dataset, write_fixture_dicom};

/// Errors raised while reading or writing DICOM data.
#[derive(Debug, Error)]
pub enum DicomError {
    #[error("truncated file: stream ends inside an element or header")]
    TruncatedFile,
    #[error("bad magic: expected \"DICM\" at offset 128")]
    BadMagic,
    #[error("unsupported transfer syntax {0}")]
    UnsupportedTransferSyntax(String),
    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),
    #[error("missing required tag {0}")]
    MissingTag(Tag),
    #[error("pixel data length {actual} does not match expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("element {tag} out of order (previous {previous})")]
    OutOfOrder { tag: Tag, previous: Tag },
    #[error("element {tag} has odd length {length}")]
    OddLength { tag: Tag, length: u32 },
    #[error("invalid value for {tag}: {reason}")]
    InvalidValue { tag: Tag, reason: String },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DicomError> = std::result::Result<T, E>;

/// A DICOM attribute tag, ordered by (group, element).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag {
    pub group: u16,
    pub element: u16,
}

impl Tag {
    pub const fn new(group: u16, element: u16) -> Self {
        Tag { group, element }
    }

    pub fn is_meta(self) -> bool {
        self.group == 0x0002
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:04X},{:04X})", self.group, self.element)
    }
}

/// Well-known tags used by the pipeline.
pub mod tags {
    use super::Tag;

    pub const FILE_META_GROUP_LENGTH: Tag = Tag::new(0x0002, 0x0000);
    pub const FILE_META_VERSION: Tag = Tag::new(0x0002, 0x0001);
    pub const MEDIA_STORAGE_SOP_CLASS_UID: Tag = Tag::new(0x0002, 0x0002);
    pub const MEDIA_STORAGE_SOP_INSTANCE_UID: Tag = Tag::new(0x0002, 0x0003);
    pub const TRANSFER_SYNTAX_UID: Tag = Tag::new(0x0002, 0x0010);
    pub const IMPLEMENTATION_CLASS_UID: Tag = Tag::new(0x0002, 0x0012);
    pub const SOP_CLASS_UID: Tag = Tag::new(0x0008, 0x0016);
    pub const SOP_INSTANCE_UID: Tag = Tag::new(0x0008, 0x0018);
    pub const MODALITY: Tag = Tag::new(0x0008, 0x0060);
    pub const PATIENT_NAME: Tag = Tag::new(0x0010, 0x0010);
    pub const PATIENT_ID: Tag = Tag::new(0x0010, 0x0020);
    pub const INSTANCE_NUMBER: Tag = Tag::new(0x0020, 0x0013);
    pub const IMAGE_POSITION_PATIENT: Tag = Tag::new(0x0020, 0x0032);
    pub const IMAGE_ORIENTATION_PATIENT: Tag = Tag::new(0x0020, 0x0037);
    pub const SAMPLES_PER_PIXEL: Tag = Tag::new(0x0028, 0x0002);
    pub const PHOTOMETRIC_INTERPRETATION: Tag = Tag::new(0x0028, 0x0004);
    pub const ROWS: Tag = Tag::new(0x0028, 0x0010);
    pub const COLUMNS: Tag = Tag::new(0x0028, 0x0011);
    pub const PIXEL_SPACING: Tag = Tag::new(0x0028, 0x0030);
    pub const BITS_ALLOCATED: Tag = Tag::new(0x0028, 0x0100);
    pub const BITS_STORED: Tag = Tag::new(0x0028, 0x0101);
    pub const HIGH_BIT: Tag = Tag::new(0x0028, 0x0102);
    pub const PIXEL_REPRESENTATION: Tag = Tag::new(0x0028, 0x0103);
    pub const RESCALE_INTERCEPT: Tag = Tag::new(0x0028, 0x1052);
    pub const RESCALE_SLOPE: Tag = Tag::new(0x0028, 0x1053);
    pub const PIXEL_DATA: Tag = Tag::new(0x7FE0, 0x0010);
}

/// Value representations retained by the dataset. Anything else decodes as `UN`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Vr {
    UL,
    US,
    SS,
    FL,
    FD,
    DS,
    IS,
    CS,
    LO,
    SH,
    PN,
    DA,
    TM,
    UI,
    OB,
    OW,
    UN,
}

impl Vr {
    pub fn from_bytes(code: [u8; 2]) -> Option<Vr> {
        Some(match &code {
            b"UL" => Vr::UL,
            b"US" => Vr::US,
            b"SS" => Vr::SS,
            b"FL" => Vr::FL,
            b"FD" => Vr::FD,
            b"DS" => Vr::DS,
            b"IS" => Vr::IS,
            b"CS" => Vr::CS,
            b"LO" => Vr::LO,
            b"SH" => Vr::SH,
            b"PN" => Vr::PN,
            b"DA" => Vr::DA,
            b"TM" => Vr::TM,
            b"UI" => Vr::UI,
            b"OB" => Vr::OB,
            b"OW" => Vr::OW,
            b"UN" => Vr::UN,
            _ => return None,
        })
    }

    pub fn code(self) -> &'static str {
        match self {
            Vr::UL => "UL",
            Vr::US => "US",
            Vr::SS => "SS",
            Vr::FL => "FL",
            Vr::FD => "FD",
            Vr::DS => "DS",
            Vr::IS => "IS",
            Vr::CS => "CS",
            Vr::LO => "LO",
            Vr::SH => "SH",
            Vr::PN => "PN",
            Vr::DA => "DA",
            Vr::TM => "TM",
            Vr::UI => "UI",
            Vr::OB => "OB",
            Vr::OW => "OW",
            Vr::UN => "UN",
        }
    }

    pub fn is_string(self) -> bool {
        matches!(
            self,
            Vr::DS | Vr::IS | Vr::CS | Vr::LO | Vr::SH | Vr::PN | Vr::DA | Vr::TM | Vr::UI
        )
    }

    /// Padding byte for odd-length values: NUL for UIDs and binary, space for text.
    pub fn pad_byte(self) -> u8 {
        if self.is_string() && self != Vr::UI {
            b' '
        } else {
            0
        }
    }

    /// Explicit-VR encodings with a 2-byte reserved field and a 4-byte length.
    pub(crate) fn has_long_length(self) -> bool {
        matches!(self, Vr::OB | Vr::OW | Vr::UN)
    }
}

impl fmt::Display for Vr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferSyntax {
    ExplicitVRLittleEndian,
    ImplicitVRLittleEndian,
}

impl TransferSyntax {
    pub const EXPLICIT_LE_UID: &'static str = "1.2.840.10008.1.2.1";
    pub const IMPLICIT_LE_UID: &'static str = "1.2.840.10008.1.2";

    pub fn from_uid(uid: &str) -> Result<Self> {
        match uid.trim_end_matches(['\0', ' ']) {
            Self::EXPLICIT_LE_UID => Ok(TransferSyntax::ExplicitVRLittleEndian),
            Self::IMPLICIT_LE_UID => Ok(TransferSyntax::ImplicitVRLittleEndian),
            other => Err(DicomError::UnsupportedTransferSyntax(other.to_string())),
        }
    }

    pub fn uid(self) -> &'static str {
        match self {
            TransferSyntax::ExplicitVRLittleEndian => Self::EXPLICIT_LE_UID,
            TransferSyntax::ImplicitVRLittleEndian => Self::IMPLICIT_LE_UID,
        }
    }
}

/// A single data element. `raw` holds the value bytes exactly as stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub tag: Tag,
    pub vr: Vr,
    pub raw: Vec<u8>,
}

impl Element {
    pub fn new(tag: Tag, vr: Vr, raw: Vec<u8>) -> Self {
        Element { tag, vr, raw }
    }

    /// String element padded to even length with the VR's pad byte.
    pub fn string(tag: Tag, vr: Vr, value: &str) -> Self {
        let mut raw = value.as_bytes().to_vec();
        if raw.len() % 2 == 1 {
            raw.push(vr.pad_byte());
        }
        Element { tag, vr, raw }
    }

    pub fn u16(tag: Tag, value: u16) -> Self {
        Element::new(tag, Vr::US, value.to_le_bytes().to_vec())
    }

    pub fn u32(tag: Tag, value: u32) -> Self {
        Element::new(tag, Vr::UL, value.to_le_bytes().to_vec())
    }

    /// Decimal string from one or more values, using the shortest representation
    /// that parses back to the same `f64`.
    pub fn decimals(tag: Tag, values: &[f64]) -> Self {
        let text = values
            .iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join("\\");
        Element::string(tag, Vr::DS, &text)
    }

    pub fn length(&self) -> u32 {
        self.raw.len() as u32
    }

    /// The value decoded as ASCII text, with trailing padding removed.
    /// Non-ASCII bytes are replaced rather than dropped; `raw` keeps the originals.
    pub fn as_text(&self) -> String {
        let trimmed = trim_padding(&self.raw);
        trimmed
            .iter()
            .map(|&b| if b.is_ascii() { b as char } else { char::REPLACEMENT_CHARACTER })
            .collect()
    }
}

fn trim_padding(raw: &[u8]) -> &[u8] {
    let mut end = raw.len();
    while end > 0 && (raw[end - 1] == 0 || raw[end - 1] == b' ') {
        end -= 1;
    }
    &raw[..end]
}

/// Parsed dataset, including any file meta elements (group 0002).
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    elements: BTreeMap<Tag, Element>,
    transfer_syntax: TransferSyntax,
}

impl DataSet {
    pub fn new(transfer_syntax: TransferSyntax) -> Self {
        DataSet {
            elements: BTreeMap::new(),
            transfer_syntax,
        }
    }

    pub fn transfer_syntax(&self) -> TransferSyntax {
        self.transfer_syntax
    }

    pub fn insert(&mut self, element: Element) -> Option<Element> {
        self.elements.insert(element.tag, element)
    }

    pub fn get(&self, tag: Tag) -> Option<&Element> {
        self.elements.get(&tag)
    }

    pub fn contains(&self, tag: Tag) -> bool {
        self.elements.contains_key(&tag)
    }

    /// Elements in ascending tag order.
    pub fn iter(&self) -> impl Iterator<Item = &Element> {
        self.elements.values()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn non_meta(&self) -> impl Iterator<Item = &Element> {
        self.elements.values().filter(|e| !e.tag.is_meta())
    }

    fn require(&self, tag: Tag) -> Result<&Element> {
        self.get(tag).ok_or(DicomError::MissingTag(tag))
    }

    pub fn get_str(&self, tag: Tag) -> Option<String> {
        self.get(tag).map(Element::as_text)
    }

    pub fn get_u16(&self, tag: Tag) -> Result<u16> {
        let e = self.require(tag)?;
        let bytes: [u8; 2] = e.raw.get(..2).and_then(|b| b.try_into().ok()).ok_or_else(|| {
            DicomError::InvalidValue {
                tag,
                reason: format!("expected 2 bytes, found {}", e.raw.len()),
            }
        })?;
        Ok(u16::from_le_bytes(bytes))
    }

    pub fn get_u32(&self, tag: Tag) -> Result<u32> {
        let e = self.require(tag)?;
        let bytes: [u8; 4] = e.raw.get(..4).and_then(|b| b.try_into().ok()).ok_or_else(|| {
            DicomError::InvalidValue {
                tag,
                reason: format!("expected 4 bytes, found {}", e.raw.len()),
            }
        })?;
        Ok(u32::from_le_bytes(bytes))
    }

    /// All backslash-separated values of a DS or IS element.
    pub fn get_decimals(&self, tag: Tag) -> Result<Vec<f64>> {
        let text = self.require(tag)?.as_text();
        text.split('\\')
            .map(|part| {
                part.trim().parse::<f64>().map_err(|_| DicomError::InvalidValue {
                    tag,
                    reason: format!("not a decimal: {part:?}"),
                })
            })
            .collect()
    }

    /// Single decimal value, or `default` when the tag is absent.
    pub fn get_decimal_or(&self, tag: Tag, default: f64) -> Result<f64> {
        if !self.contains(tag) {
            return Ok(default);
        }
        let values = self.get_decimals(tag)?;
        match values.as_slice() {
            [v] => Ok(*v),
            _ => Err(DicomError::InvalidValue {
                tag,
                reason: format!("expected one value, found {}", values.len()),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_renders_uppercase_hex() {
        assert_eq!(Tag::new(0x7fe0, 0x10).to_string(), "(7FE0,0010)");
        assert_eq!(tags::PIXEL_SPACING.to_string(), "(0028,0030)");
    }

    #[test]
    fn tag_orders_by_group_then_element() {
        assert!(Tag::new(0x0008, 0xFFFF) < Tag::new(0x0010, 0x0000));
        assert!(Tag::new(0x0028, 0x0010) < Tag::new(0x0028, 0x0011));
    }

    #[test]
    fn string_elements_are_padded_even() {
        let e = Element::string(tags::MODALITY, Vr::CS, "MRI");
        assert_eq!(e.raw, b"MRI ");
        let uid = Element::string(tags::TRANSFER_SYNTAX_UID, Vr::UI, "1.2.840.10008.1.2.1");
        assert_eq!(uid.raw.len() % 2, 0);
        assert_eq!(*uid.raw.last().unwrap(), 0);
        assert_eq!(uid.as_text(), "1.2.840.10008.1.2.1");
    }

    #[test]
    fn transfer_syntax_lookup() {
        assert_eq!(
            TransferSyntax::from_uid("1.2.840.10008.1.2.1\0").unwrap(),
            TransferSyntax::ExplicitVRLittleEndian
        );
        assert_eq!(
            TransferSyntax::from_uid("1.2.840.10008.1.2").unwrap(),
            TransferSyntax::ImplicitVRLittleEndian
        );
        for uid in ["1.2.840.10008.1.2.2", "1.2.840.10008.1.2.4.50", "1.2.840.10008.1.2.1.99"] {
            assert!(matches!(
                TransferSyntax::from_uid(uid),
                Err(DicomError::UnsupportedTransferSyntax(_))
            ));
        }
    }

    #[test]
    fn decimal_accessors() {
        let mut ds = DataSet::new(TransferSyntax::ExplicitVRLittleEndian);
        ds.insert(Element::decimals(tags::PIXEL_SPACING, &[0.5, 0.75]));
        assert_eq!(ds.get_decimals(tags::PIXEL_SPACING).unwrap(), vec![0.5, 0.75]);
        assert_eq!(ds.get_decimal_or(tags::RESCALE_SLOPE, 1.0).unwrap(), 1.0);
        assert!(matches!(
            ds.get_u16(tags::ROWS),
            Err(DicomError::MissingTag(t)) if t == tags::ROWS
        ));
    }

    #[test]
    fn non_ascii_text_is_preserved_raw() {
        let e = Element::new(tags::PATIENT_NAME, Vr::PN, vec![b'A', 0xE9, b'B', b' ']);
        assert_eq!(e.as_text(), "A\u{FFFD}B");
        assert_eq!(e.raw[1], 0xE9);
    }
}
