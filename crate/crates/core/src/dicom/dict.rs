use super::{Tag, Vr};

/// VR implied for a tag in an implicit-VR stream.
///
/// Covers the tags the pipeline reads or the fixture writer emits; everything
/// else is `UN`. Group-length elements (gggg,0000) are always `UL`.
pub fn implicit_vr(tag: Tag) -> Vr {
    if tag.element == 0x0000 {
        return Vr::UL;
    }
    match (tag.group, tag.element) {
        (0x0002, 0x0001) => Vr::OB,
        (0x0002, 0x0002) | (0x0002, 0x0003) | (0x0002, 0x0010) | (0x0002, 0x0012) => Vr::UI,
        (0x0002, 0x0013) => Vr::SH,
        (0x0008, 0x0005) | (0x0008, 0x0008) | (0x0008, 0x0060) => Vr::CS,
        (0x0008, 0x0016) | (0x0008, 0x0018) => Vr::UI,
        (0x0008, 0x0020) | (0x0008, 0x0021) | (0x0008, 0x0022) | (0x0008, 0x0023) => Vr::DA,
        (0x0008, 0x0030) | (0x0008, 0x0031) | (0x0008, 0x0032) | (0x0008, 0x0033) => Vr::TM,
        (0x0008, 0x0050) => Vr::SH,
        (0x0008, 0x0070) | (0x0008, 0x1030) | (0x0008, 0x103E) => Vr::LO,
        (0x0010, 0x0010) => Vr::PN,
        (0x0010, 0x0020) => Vr::LO,
        (0x0010, 0x0030) => Vr::DA,
        (0x0010, 0x0040) => Vr::CS,
        (0x0018, 0x0050) | (0x0018, 0x0080) | (0x0018, 0x0081) | (0x0018, 0x0087) => Vr::DS,
        (0x0018, 0x0088) => Vr::DS,
        (0x0020, 0x000D) | (0x0020, 0x000E) | (0x0020, 0x0052) => Vr::UI,
        (0x0020, 0x0010) => Vr::SH,
        (0x0020, 0x0011) | (0x0020, 0x0012) | (0x0020, 0x0013) => Vr::IS,
        (0x0020, 0x0032) | (0x0020, 0x0037) | (0x0020, 0x1041) => Vr::DS,
        (0x0028, 0x0002) => Vr::US,
        (0x0028, 0x0004) => Vr::CS,
        (0x0028, 0x0010) | (0x0028, 0x0011) => Vr::US,
        (0x0028, 0x0030) => Vr::DS,
        (0x0028, 0x0100) | (0x0028, 0x0101) | (0x0028, 0x0102) | (0x0028, 0x0103) => Vr::US,
        (0x0028, 0x1050) | (0x0028, 0x1051) | (0x0028, 0x1052) | (0x0028, 0x1053) => Vr::DS,
        (0x7FE0, 0x0010) => Vr::OW,
        _ => Vr::UN,
    }
}

/// Sequence tags known to appear in MR objects; skipped when read implicitly.
pub(crate) fn is_implicit_sequence(tag: Tag) -> bool {
    matches!(
        (tag.group, tag.element),
        (0x0008, 0x1110)
            | (0x0008, 0x1111)
            | (0x0008, 0x1115)
            | (0x0008, 0x1140)
            | (0x0008, 0x2112)
            | (0x0008, 0x9215)
            | (0x0040, 0x0275)
            | (0x5200, 0x9229)
            | (0x5200, 0x9230)
    )
}

/// Explicit-VR codes that carry a reserved field and a 32-bit length.
pub(crate) fn explicit_long_length(code: [u8; 2]) -> bool {
    matches!(
        &code,
        b"OB" | b"OW" | b"OF" | b"OD" | b"OL" | b"OV" | b"SQ" | b"UC" | b"UR" | b"UT" | b"UN"
            | b"SV" | b"UV"
    )
}
