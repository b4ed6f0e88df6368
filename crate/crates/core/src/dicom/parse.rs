use super::dict::{explicit_long_length, implicit_vr, is_implicit_sequence};
use super::{tags, DataSet, DicomError, Element, Result, Tag, TransferSyntax, Vr};

const PREAMBLE_LEN: usize = 128;
const UNDEFINED_LENGTH: u32 = 0xFFFF_FFFF;

/// Parse a DICOM stream into a dataset.
///
/// Accepts a 128-byte preamble followed by `DICM` and an explicit-VR meta
/// group, or a headerless implicit-VR stream whose first element belongs to
/// group 0002 or 0008.
pub fn parse_dicom(bytes: &[u8]) -> Result<DataSet> {
    if bytes.len() >= PREAMBLE_LEN + 4 && &bytes[PREAMBLE_LEN..PREAMBLE_LEN + 4] == b"DICM" {
        return parse_with_meta(bytes, PREAMBLE_LEN + 4);
    }
    if looks_headerless(bytes) {
        let mut reader = Reader::new(bytes, 0, TransferSyntax::ImplicitVRLittleEndian);
        let mut ds = DataSet::new(TransferSyntax::ImplicitVRLittleEndian);
        reader.read_until(&mut ds, |_| true)?;
        return Ok(ds);
    }
    if bytes.len() < PREAMBLE_LEN + 4 {
        Err(DicomError::TruncatedFile)
    } else {
        Err(DicomError::BadMagic)
    }
}

/// A stream without preamble is accepted when its first 8 bytes decode as an
/// implicit-VR element header in group 0002 or 0008 whose value fits the input.
fn looks_headerless(bytes: &[u8]) -> bool {
    if bytes.len() < 8 {
        return false;
    }
    let group = u16::from_le_bytes([bytes[0], bytes[1]]);
    let length = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]);
    matches!(group, 0x0002 | 0x0008)
        && length != UNDEFINED_LENGTH
        && (length as usize) <= bytes.len() - 8
}

fn parse_with_meta(bytes: &[u8], start: usize) -> Result<DataSet> {
    let mut meta_reader = Reader::new(bytes, start, TransferSyntax::ExplicitVRLittleEndian);
    let mut meta = DataSet::new(TransferSyntax::ExplicitVRLittleEndian);
    meta_reader.read_until(&mut meta, |tag| tag.group == 0x0002)?;

    let syntax = match meta.get(tags::TRANSFER_SYNTAX_UID) {
        Some(e) => TransferSyntax::from_uid(&e.as_text())?,
        None => TransferSyntax::ImplicitVRLittleEndian,
    };

    let mut ds = DataSet::new(syntax);
    for element in meta.iter() {
        ds.insert(element.clone());
    }
    let mut reader = Reader {
        syntax,
        ..meta_reader
    };
    reader.read_until(&mut ds, |_| true)?;
    Ok(ds)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    syntax: TransferSyntax,
    last: Option<Tag>,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], pos: usize, syntax: TransferSyntax) -> Self {
        Reader {
            bytes,
            pos,
            syntax,
            last: None,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(DicomError::TruncatedFile)?;
        let slice = self.bytes.get(self.pos..end).ok_or(DicomError::TruncatedFile)?;
        self.pos = end;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn peek_tag(&self) -> Option<Tag> {
        let b = self.bytes.get(self.pos..self.pos + 4)?;
        Some(Tag::new(
            u16::from_le_bytes([b[0], b[1]]),
            u16::from_le_bytes([b[2], b[3]]),
        ))
    }

    /// Reads elements while `accept(next_tag)` holds and input remains.
    fn read_until(&mut self, ds: &mut DataSet, accept: impl Fn(Tag) -> bool) -> Result<()> {
        while self.pos < self.bytes.len() {
            match self.peek_tag() {
                Some(tag) if !accept(tag) => break,
                None => return Err(DicomError::TruncatedFile),
                Some(_) => {}
            }
            if let Some(element) = self.next_element()? {
                ds.insert(element);
            }
        }
        Ok(())
    }

    /// Returns `None` for skipped sequences.
    fn next_element(&mut self) -> Result<Option<Element>> {
        let tag = Tag::new(self.u16()?, self.u16()?);
        if let Some(previous) = self.last {
            if tag <= previous {
                return Err(DicomError::OutOfOrder { tag, previous });
            }
        }
        self.last = Some(tag);

        let (vr, is_sequence, length) = match self.syntax {
            TransferSyntax::ExplicitVRLittleEndian => {
                let code_bytes = self.take(2)?;
                let code = [code_bytes[0], code_bytes[1]];
                let length = if explicit_long_length(code) {
                    self.take(2)?;
                    self.u32()?
                } else {
                    self.u16()? as u32
                };
                (Vr::from_bytes(code).unwrap_or(Vr::UN), &code == b"SQ", length)
            }
            TransferSyntax::ImplicitVRLittleEndian => {
                let length = self.u32()?;
                (implicit_vr(tag), is_implicit_sequence(tag), length)
            }
        };

        if length == UNDEFINED_LENGTH {
            let what = if is_sequence {
                "sequence"
            } else {
                "element"
            };
            return Err(DicomError::UnsupportedFeature(format!(
                "undefined-length {what} {tag}"
            )));
        }
        if length % 2 == 1 {
            return Err(DicomError::OddLength { tag, length });
        }
        let raw = self.take(length as usize)?;
        if is_sequence {
            return Ok(None);
        }
        Ok(Some(Element::new(tag, vr, raw.to_vec())))
    }
}
