use std::fmt::Write as _;

use image::{Rgb, RgbImage};
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::Serialize;

use super::crop::{check_canvas, pixel_rects};
use super::fill::dominant_fill_color_in;
use super::PostprocessError;
use crate::layout::{ComponentCategory, Layout};
use crate::wireframe::{hex, parse_hex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeKind {
    Container,
    Component(ComponentCategory),
}

impl NodeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeKind::Container => "container",
            NodeKind::Component(c) => c.name(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s == "container" {
            Some(NodeKind::Container)
        } else {
            ComponentCategory::from_name(s).map(NodeKind::Component)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum CornerStyle {
    #[default]
    Square,
    Rounded,
}

impl CornerStyle {
    fn for_kind(kind: NodeKind) -> Self {
        use ComponentCategory as C;
        match kind {
            NodeKind::Component(c)
                if [C::TEXT_BUTTON, C::CARD, C::INPUT, C::MODAL, C::ON_OFF_SWITCH].contains(&c) =>
            {
                CornerStyle::Rounded
            }
            _ => CornerStyle::Square,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            CornerStyle::Square => "square",
            CornerStyle::Rounded => "rounded",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "square" => Some(CornerStyle::Square),
            "rounded" => Some(CornerStyle::Rounded),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct NodeStyle {
    #[serde(serialize_with = "ser_color")]
    pub background: Option<Rgb<u8>>,
    pub corner: CornerStyle,
}

fn ser_color<S: serde::Serializer>(c: &Option<Rgb<u8>>, s: S) -> Result<S::Ok, S::Error> {
    match c {
        Some(c) => s.serialize_some(&hex(*c)),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GuiNode {
    pub kind: NodeKind,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub style: NodeStyle,
    pub children: Vec<GuiNode>,
}

/// Root is a container covering the whole canvas.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GuiDocument {
    pub root: GuiNode,
}

impl GuiDocument {
    pub fn empty(w: u32, h: u32) -> Self {
        Self {
            root: GuiNode {
                kind: NodeKind::Container,
                x: 0,
                y: 0,
                w,
                h,
                style: NodeStyle::default(),
                children: Vec::new(),
            },
        }
    }

    pub fn width(&self) -> u32 {
        self.root.w
    }

    pub fn height(&self) -> u32 {
        self.root.h
    }

    /// Every non-root node in document order.
    pub fn nodes(&self) -> Vec<&GuiNode> {
        fn walk<'a>(n: &'a GuiNode, out: &mut Vec<&'a GuiNode>) {
            for c in &n.children {
                out.push(c);
                walk(c, out);
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }
}

#[derive(Debug, Clone)]
pub struct CodegenOutput {
    pub document: GuiDocument,
    pub xml: String,
    pub html: String,
}

/// Builds a flat document with one node per element, in stacking order.
/// With a UI image, each node's background is the dominant color of the
/// element's visible pixels.
pub fn generate_code(
    layout: &Layout,
    ui: Option<&RgbImage>,
) -> Result<CodegenOutput, PostprocessError> {
    layout
        .ensure_valid(usize::MAX)
        .map_err(|e| PostprocessError::InvalidLayout(e.to_string()))?;
    if let Some(ui) = ui {
        check_canvas(ui, layout)?;
    }
    let rects = pixel_rects(layout);
    let mut doc = GuiDocument::empty(layout.canvas_w, layout.canvas_h);
    for (i, (el, rect)) in layout.elements.iter().zip(&rects).enumerate() {
        let kind = NodeKind::Component(el.category);
        let background = match ui {
            Some(ui) if !rect.is_empty() => {
                let above = &rects[i + 1..];
                let covered = |x: u32, y: u32| above.iter().any(|r| r.contains(x, y));
                match dominant_fill_color_in(ui, *rect, |x, y| !covered(x, y)) {
                    Ok(c) => Some(c),
                    Err(PostprocessError::EmptyRegion) => {
                        Some(dominant_fill_color_in(ui, *rect, |_, _| true)?)
                    }
                    Err(e) => return Err(e),
                }
            }
            _ => None,
        };
        doc.root.children.push(GuiNode {
            kind,
            x: rect.x0,
            y: rect.y0,
            w: rect.width(),
            h: rect.height(),
            style: NodeStyle {
                background,
                corner: CornerStyle::for_kind(kind),
            },
            children: Vec::new(),
        });
    }
    let xml = emit_xml(&doc);
    let html = emit_html(&doc);
    Ok(CodegenOutput {
        document: doc,
        xml,
        html,
    })
}

fn esc(s: &str) -> std::borrow::Cow<'_, str> {
    quick_xml::escape::escape(s)
}

fn write_xml_node(out: &mut String, n: &GuiNode, depth: usize) {
    let pad = "  ".repeat(depth);
    let _ = write!(
        out,
        "{pad}<node kind=\"{}\" x=\"{}\" y=\"{}\" w=\"{}\" h=\"{}\"",
        esc(n.kind.as_str()),
        n.x,
        n.y,
        n.w,
        n.h
    );
    if let Some(bg) = n.style.background {
        let _ = write!(out, " bg=\"{}\"", hex(bg));
    }
    let _ = write!(out, " corner=\"{}\"", n.style.corner.as_str());
    if n.children.is_empty() {
        out.push_str("/>\n");
    } else {
        out.push_str(">\n");
        for c in &n.children {
            write_xml_node(out, c, depth + 1);
        }
        let _ = writeln!(out, "{pad}</node>");
    }
}

/// Canonical markup: `<screen w h>` wrapping one `<node>` per component.
pub fn emit_xml(doc: &GuiDocument) -> String {
    let mut out = String::new();
    let _ = write!(out, "<screen w=\"{}\" h=\"{}\"", doc.width(), doc.height());
    if doc.root.children.is_empty() {
        out.push_str("/>\n");
        return out;
    }
    out.push_str(">\n");
    for c in &doc.root.children {
        write_xml_node(&mut out, c, 1);
    }
    out.push_str("</screen>\n");
    out
}

fn perr(msg: impl Into<String>) -> PostprocessError {
    PostprocessError::Parse(msg.into())
}

fn attrs(e: &BytesStart<'_>) -> Result<Vec<(String, String)>, PostprocessError> {
    e.attributes()
        .map(|a| {
            let a = a.map_err(|e| perr(e.to_string()))?;
            let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
            let value = a.unescape_value().map_err(|e| perr(e.to_string()))?;
            Ok((key, value.into_owned()))
        })
        .collect()
}

fn get<'a>(attrs: &'a [(String, String)], key: &str) -> Option<&'a str> {
    attrs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn get_u32(attrs: &[(String, String)], key: &str) -> Result<u32, PostprocessError> {
    let v = get(attrs, key).ok_or_else(|| perr(format!("missing attribute {key}")))?;
    v.parse()
        .map_err(|_| perr(format!("attribute {key}={v:?} is not a pixel count")))
}

fn parse_node(e: &BytesStart<'_>) -> Result<GuiNode, PostprocessError> {
    let a = attrs(e)?;
    let kind_s = get(&a, "kind").ok_or_else(|| perr("node without kind"))?;
    let kind = NodeKind::parse(kind_s).ok_or_else(|| perr(format!("unknown kind {kind_s:?}")))?;
    let background = get(&a, "bg")
        .map(|s| parse_hex(s).map_err(|e| perr(e.to_string())))
        .transpose()?;
    let corner = match get(&a, "corner") {
        Some(s) => CornerStyle::parse(s).ok_or_else(|| perr(format!("bad corner {s:?}")))?,
        None => CornerStyle::default(),
    };
    Ok(GuiNode {
        kind,
        x: get_u32(&a, "x")?,
        y: get_u32(&a, "y")?,
        w: get_u32(&a, "w")?,
        h: get_u32(&a, "h")?,
        style: NodeStyle { background, corner },
        children: Vec::new(),
    })
}

/// Parses the canonical markup produced by [`emit_xml`].
pub fn parse_xml(text: &str) -> Result<GuiDocument, PostprocessError> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);
    let mut stack: Vec<GuiNode> = Vec::new();
    let mut doc: Option<GuiDocument> = None;
    loop {
        let ev = reader
            .read_event()
            .map_err(|e| perr(format!("at byte {}: {e}", reader.buffer_position())))?;
        match ev {
            Event::Start(e) | Event::Empty(e) if doc.is_some() => {
                return Err(perr(format!(
                    "content after </screen>: <{}>",
                    String::from_utf8_lossy(e.name().as_ref())
                )))
            }
            Event::Start(e) => {
                let node = start_node(&e, stack.is_empty())?;
                stack.push(node);
            }
            Event::Empty(e) => {
                let node = start_node(&e, stack.is_empty())?;
                close(node, &mut stack, &mut doc);
            }
            Event::End(_) => {
                let node = stack.pop().ok_or_else(|| perr("unbalanced end tag"))?;
                close(node, &mut stack, &mut doc);
            }
            Event::Eof => break,
            Event::Text(t) if !t.as_ref().iter().all(u8::is_ascii_whitespace) => {
                return Err(perr("unexpected text content"))
            }
            _ => {}
        }
    }
    if !stack.is_empty() {
        return Err(perr("unclosed element"));
    }
    doc.ok_or_else(|| perr("no <screen> element"))
}

fn start_node(e: &BytesStart<'_>, is_root: bool) -> Result<GuiNode, PostprocessError> {
    let name = e.name();
    match (name.as_ref(), is_root) {
        (b"screen", true) => {
            let a = attrs(e)?;
            Ok(GuiDocument::empty(get_u32(&a, "w")?, get_u32(&a, "h")?).root)
        }
        (b"node", false) => parse_node(e),
        (other, _) => Err(perr(format!(
            "unexpected element <{}>",
            String::from_utf8_lossy(other)
        ))),
    }
}

fn close(node: GuiNode, stack: &mut [GuiNode], doc: &mut Option<GuiDocument>) {
    match stack.last_mut() {
        Some(parent) => parent.children.push(node),
        None => *doc = Some(GuiDocument { root: node }),
    }
}

fn css_class(kind: NodeKind) -> String {
    let slug: String = kind
        .as_str()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect();
    format!("ui-{slug}")
}

fn write_html_node(out: &mut String, n: &GuiNode, parent: (u32, u32), depth: usize) {
    let pad = "  ".repeat(depth);
    let mut style = format!(
        "left:{}px;top:{}px;width:{}px;height:{}px",
        n.x - parent.0,
        n.y - parent.1,
        n.w,
        n.h
    );
    if let Some(bg) = n.style.background {
        let _ = write!(style, ";background:{}", hex(bg));
    }
    let mut class = format!("node {}", css_class(n.kind));
    if n.style.corner == CornerStyle::Rounded {
        class.push_str(" rounded");
    }
    let _ = write!(
        out,
        "{pad}<div class=\"{class}\" data-kind=\"{}\" style=\"{style}\">",
        esc(n.kind.as_str())
    );
    if n.children.is_empty() {
        out.push_str("</div>\n");
    } else {
        out.push('\n');
        for c in &n.children {
            write_html_node(out, c, (n.x, n.y), depth + 1);
        }
        let _ = writeln!(out, "{pad}</div>");
    }
}

/// Self-contained HTML page with one absolutely positioned block per node.
pub fn emit_html(doc: &GuiDocument) -> String {
    let mut out = String::new();
    out.push_str("<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>UI prototype</title>\n<style>\n");
    let _ = writeln!(
        out,
        ".screen {{ position: relative; width: {}px; height: {}px; overflow: hidden; background: #ffffff; }}",
        doc.width(),
        doc.height()
    );
    out.push_str(".node { position: absolute; box-sizing: border-box; border: 1px solid rgba(0,0,0,0.25); }\n");
    out.push_str(".rounded { border-radius: 8px; }\n");
    out.push_str("</style>\n</head>\n<body>\n<div class=\"screen\">\n");
    for c in &doc.root.children {
        write_html_node(&mut out, c, (0, 0), 1);
    }
    out.push_str("</div>\n</body>\n</html>\n");
    out
}
