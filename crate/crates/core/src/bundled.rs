//! Grammars and sample messages shipped with the crate.

use crate::frontend::{parse_zebu, AnnotatedGrammar};

pub const SIP_SUBSET: &str = include_str!("../grammars/sip-subset.zebu");
pub const RTSP_SUBSET: &str = include_str!("../grammars/rtsp-subset.zebu");

/// Minimal INVITE with the mandatory headers only.
pub const SIP_INVITE1: &[u8] = include_bytes!("../corpus/sip/invite1.raw");
/// 34-header INVITE with From first.
pub const SIP_INVITE2: &[u8] = include_bytes!("../corpus/sip/invite2.raw");
/// The same 34 headers with From last.
pub const SIP_INVITE3: &[u8] = include_bytes!("../corpus/sip/invite3.raw");
/// 7-header BYE.
pub const SIP_BYE: &[u8] = include_bytes!("../corpus/sip/bye.raw");
pub const SIP_OK200: &[u8] = include_bytes!("../corpus/sip/ok200.raw");

pub const RTSP_MESSAGES: [&[u8]; 3] = [
    include_bytes!("../corpus/rtsp/describe.raw"),
    include_bytes!("../corpus/rtsp/setup.raw"),
    include_bytes!("../corpus/rtsp/reply.raw"),
];

pub fn sip() -> AnnotatedGrammar {
    parse_zebu(SIP_SUBSET).expect("bundled SIP grammar parses")
}

pub fn rtsp() -> AnnotatedGrammar {
    parse_zebu(RTSP_SUBSET).expect("bundled RTSP grammar parses")
}

pub fn sip_corpus() -> [(&'static str, &'static [u8]); 5] {
    [
        ("invite1", SIP_INVITE1),
        ("invite2", SIP_INVITE2),
        ("invite3", SIP_INVITE3),
        ("bye", SIP_BYE),
        ("ok200", SIP_OK200),
    ]
}
