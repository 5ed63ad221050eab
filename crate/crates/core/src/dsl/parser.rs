//! Recursive-descent parser and resolver for the diagram DSL.
//!
//! Parsing happens in two passes: the grammar pass builds statement ASTs with
//! spans, and the resolve pass binds interface references, builds the
//! [`DiagramTree`] scope by scope, and validates each scope's diagram, mapping
//! violations back to source positions.

use std::collections::BTreeMap;

use crate::diagram::{
    BoxId, BoxInterface, DiagramTree, PortRef, PortSpec, ValueKind, Wire, WiringDiagram,
};
use crate::dsl::lexer::{lex, Span, Token, TokenKind};
use crate::dsl::{Attachment, Document, ParseError};
use crate::dynamics::Gate;
use crate::learn::Activation;
use crate::value::Value;

// ---------------------------------------------------------------------------
// AST
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum Stmt {
    Outer { span: Span, name: String },
    Interface { span: Span, name: String, ports: Vec<(Span, bool, String, ValueKind)> },
    Box { span: Span, name: String, iface: (Span, String), body: Option<Vec<Stmt>> },
    Wire { span: Span, source: Endpoint, dest: Endpoint },
    Attach { target: (Span, String), attachment: AttachAst },
}

#[derive(Debug, Clone)]
struct Endpoint {
    span: Span,
    owner: String,
    port: String,
}

#[derive(Debug, Clone)]
enum AttachAst {
    Gate { span: Span, name: String },
    Unit(Vec<(Span, String, DslValue)>),
    Lti(Vec<(Span, String, DslValue)>),
    Delay(Vec<(Span, String, DslValue)>),
}

#[derive(Debug, Clone)]
enum DslValue {
    Number(Span, f64),
    Bool(Span, bool),
    Ident(Span, String),
    List(Span, Vec<DslValue>),
}

impl DslValue {
    fn span(&self) -> Span {
        match self {
            DslValue::Number(s, _)
            | DslValue::Bool(s, _)
            | DslValue::Ident(s, _)
            | DslValue::List(s, _) => *s,
        }
    }
}

// ---------------------------------------------------------------------------
// Grammar pass
// ---------------------------------------------------------------------------

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, expected: &[&str]) -> ParseError {
        let t = self.peek();
        ParseError {
            line: t.span.line,
            col: t.span.col,
            message: format!("unexpected {}", t.kind.describe()),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(Span, String), ParseError> {
        match &self.peek().kind {
            TokenKind::Ident(_) => {
                let t = self.advance();
                let TokenKind::Ident(name) = t.kind else { unreachable!() };
                Ok((t.span, name))
            }
            _ => Err(self.err(&[what])),
        }
    }

    fn expect(&mut self, kind: &TokenKind, what: &str) -> Result<Span, ParseError> {
        if &self.peek().kind == kind {
            Ok(self.advance().span)
        } else {
            Err(self.err(&[what]))
        }
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if &self.peek().kind == kind {
            self.advance();
            true
        } else {
            false
        }
    }

    fn parse_document(&mut self) -> Result<Vec<Stmt>, ParseError> {
        let mut stmts = Vec::new();
        while !matches!(self.peek().kind, TokenKind::Eof) {
            stmts.push(self.parse_stmt(true)?);
        }
        Ok(stmts)
    }

    fn parse_stmt(&mut self, top_level: bool) -> Result<Stmt, ParseError> {
        let t = self.peek().clone();
        let TokenKind::Ident(word) = &t.kind else {
            return Err(self.err(&["`interface`", "`box`", "`wire`", "`attach`", "`outer`"]));
        };
        match word.as_str() {
            "outer" if top_level => {
                self.advance();
                let (_, name) = self.expect_ident("interface name")?;
                Ok(Stmt::Outer { span: t.span, name })
            }
            "interface" if top_level => self.parse_interface(t.span),
            "box" => self.parse_box(t.span),
            "wire" => self.parse_wire(t.span),
            "attach" => self.parse_attach(),
            _ => {
                if top_level {
                    Err(self.err(&["`interface`", "`box`", "`wire`", "`attach`", "`outer`"]))
                } else {
                    Err(self.err(&["`box`", "`wire`", "`attach`"]))
                }
            }
        }
    }

    fn parse_interface(&mut self, span: Span) -> Result<Stmt, ParseError> {
        self.advance(); // interface
        let (_, name) = self.expect_ident("interface name")?;
        self.expect(&TokenKind::LBrace, "`{`")?;
        let mut ports = Vec::new();
        loop {
            if self.eat(&TokenKind::RBrace) {
                break;
            }
            let (pspan, dir) = match &self.peek().kind {
                TokenKind::Ident(w) if w == "in" => (self.advance().span, true),
                TokenKind::Ident(w) if w == "out" => (self.advance().span, false),
                _ => return Err(self.err(&["`in`", "`out`", "`}`"])),
            };
            let (_, pname) = self.expect_ident("port name")?;
            self.expect(&TokenKind::Colon, "`:`")?;
            let kind = self.parse_kind()?;
            ports.push((pspan, dir, pname, kind));
            if !self.eat(&TokenKind::Semi) {
                self.expect(&TokenKind::RBrace, "`;` or `}`")?;
                break;
            }
        }
        Ok(Stmt::Interface { span, name, ports })
    }

    fn parse_kind(&mut self) -> Result<ValueKind, ParseError> {
        let (span, word) = self.expect_ident("`bool` or `real`")?;
        match word.as_str() {
            "bool" => Ok(ValueKind::Boolean),
            "real" => {
                if self.eat(&TokenKind::LBracket) {
                    if !matches!(self.peek().kind, TokenKind::Number(_)) {
                        return Err(self.err(&["vector dimension"]));
                    }
                    let t = self.advance();
                    let TokenKind::Number(text) = &t.kind else { unreachable!() };
                    let dim = text.parse::<usize>().map_err(|_| ParseError {
                        line: t.span.line,
                        col: t.span.col,
                        message: format!("`{text}` is not a vector dimension"),
                        expected: vec!["positive integer".to_string()],
                    })?;
                    self.expect(&TokenKind::RBracket, "`]`")?;
                    Ok(ValueKind::RealVector(dim))
                } else {
                    Ok(ValueKind::Real)
                }
            }
            other => Err(ParseError {
                line: span.line,
                col: span.col,
                message: format!("unknown port kind `{other}`"),
                expected: vec!["`bool`".to_string(), "`real`".to_string()],
            }),
        }
    }

    fn parse_box(&mut self, span: Span) -> Result<Stmt, ParseError> {
        self.advance(); // box
        let (_, name) = self.expect_ident("box name")?;
        self.expect(&TokenKind::Colon, "`:`")?;
        let iface = self.expect_ident("interface name")?;
        let body = if self.eat(&TokenKind::LBrace) {
            let mut stmts = Vec::new();
            while !self.eat(&TokenKind::RBrace) {
                if matches!(self.peek().kind, TokenKind::Eof) {
                    return Err(self.err(&["`}`"]));
                }
                stmts.push(self.parse_stmt(false)?);
            }
            Some(stmts)
        } else {
            None
        };
        Ok(Stmt::Box { span, name, iface, body })
    }

    fn parse_wire(&mut self, span: Span) -> Result<Stmt, ParseError> {
        self.advance(); // wire
        let source = self.parse_endpoint()?;
        self.expect(&TokenKind::Arrow, "`->`")?;
        let dest = self.parse_endpoint()?;
        Ok(Stmt::Wire { span, source, dest })
    }

    fn parse_endpoint(&mut self) -> Result<Endpoint, ParseError> {
        let (span, owner) = self.expect_ident("box name or `outer`")?;
        self.expect(&TokenKind::Dot, "`.`")?;
        let (_, port) = self.expect_ident("port name")?;
        Ok(Endpoint { span, owner, port })
    }

    fn parse_attach(&mut self) -> Result<Stmt, ParseError> {
        self.advance(); // attach
        let target = self.expect_ident("box name")?;
        let (kspan, kind) = self.expect_ident("`unit`, `gate`, `lti`, or `delay`")?;
        let attachment = match kind.as_str() {
            "gate" => {
                let (gspan, gname) = self.expect_ident("gate name")?;
                AttachAst::Gate { span: gspan, name: gname }
            }
            "unit" => AttachAst::Unit(self.parse_kv_block()?),
            "lti" => AttachAst::Lti(self.parse_kv_block()?),
            "delay" => AttachAst::Delay(self.parse_kv_block()?),
            other => {
                return Err(ParseError {
                    line: kspan.line,
                    col: kspan.col,
                    message: format!("unknown attachment kind `{other}`"),
                    expected: ["`unit`", "`gate`", "`lti`", "`delay`"]
                        .iter()
                        .map(|s| s.to_string())
                        .collect(),
                })
            }
        };
        Ok(Stmt::Attach { target, attachment })
    }

    fn parse_kv_block(&mut self) -> Result<Vec<(Span, String, DslValue)>, ParseError> {
        self.expect(&TokenKind::LBrace, "`{`")?;
        let mut pairs = Vec::new();
        loop {
            if self.eat(&TokenKind::RBrace) {
                break;
            }
            let (span, key) = self.expect_ident("key")?;
            self.expect(&TokenKind::Colon, "`:`")?;
            let value = self.parse_value()?;
            pairs.push((span, key, value));
            if !self.eat(&TokenKind::Comma) {
                self.expect(&TokenKind::RBrace, "`,` or `}`")?;
                break;
            }
        }
        Ok(pairs)
    }

    fn parse_value(&mut self) -> Result<DslValue, ParseError> {
        let t = self.peek().clone();
        match &t.kind {
            TokenKind::Number(text) => {
                self.advance();
                let x = text.parse::<f64>().map_err(|_| ParseError {
                    line: t.span.line,
                    col: t.span.col,
                    message: format!("`{text}` is not a number"),
                    expected: vec!["number".to_string()],
                })?;
                Ok(DslValue::Number(t.span, x))
            }
            TokenKind::Ident(w) if w == "true" => {
                self.advance();
                Ok(DslValue::Bool(t.span, true))
            }
            TokenKind::Ident(w) if w == "false" => {
                self.advance();
                Ok(DslValue::Bool(t.span, false))
            }
            TokenKind::Ident(w) => {
                let w = w.clone();
                self.advance();
                Ok(DslValue::Ident(t.span, w))
            }
            TokenKind::LBracket => {
                self.advance();
                let mut items = Vec::new();
                loop {
                    if self.eat(&TokenKind::RBracket) {
                        break;
                    }
                    items.push(self.parse_value()?);
                    if !self.eat(&TokenKind::Comma) {
                        self.expect(&TokenKind::RBracket, "`,` or `]`")?;
                        break;
                    }
                }
                Ok(DslValue::List(t.span, items))
            }
            _ => Err(self.err(&["number", "`true`", "`false`", "identifier", "`[`"])),
        }
    }
}

// ---------------------------------------------------------------------------
// Resolve pass
// ---------------------------------------------------------------------------

struct Resolver {
    interfaces: BTreeMap<String, (Span, BoxInterface)>,
}

fn resolve_err(span: Span, message: String) -> ParseError {
    ParseError { line: span.line, col: span.col, message, expected: Vec::new() }
}

impl Resolver {
    /// Build one scope (the whole document or a box body) into a tree node.
    fn build_scope(
        &self,
        outer: BoxInterface,
        stmts: &[Stmt],
        path: Option<&BoxId>,
        attachments: &mut BTreeMap<BoxId, Attachment>,
    ) -> Result<DiagramTree, ParseError> {
        let mut diagram = WiringDiagram::new(outer);
        let mut children = BTreeMap::new();
        let mut box_spans: BTreeMap<BoxId, Span> = BTreeMap::new();

        // boxes first so wires and attaches can reference them in any order
        for stmt in stmts {
            if let Stmt::Box { span, name, iface, body } = stmt {
                let id = BoxId::from(name.as_str());
                if diagram.inner.contains_key(&id) {
                    return Err(resolve_err(*span, format!("box `{name}` declared twice")));
                }
                let (_, interface) = self.interfaces.get(&iface.1).ok_or_else(|| {
                    resolve_err(iface.0, format!("undeclared interface `{}`", iface.1))
                })?;
                diagram.add_box(id.clone(), interface.clone());
                box_spans.insert(id.clone(), *span);
                if let Some(body) = body {
                    let child_path = match path {
                        Some(p) => p.join(&id),
                        None => id.clone(),
                    };
                    let child = self.build_scope(
                        interface.clone(),
                        body,
                        Some(&child_path),
                        attachments,
                    )?;
                    children.insert(id, child);
                }
            }
        }

        let mut wire_spans: BTreeMap<Wire, Span> = BTreeMap::new();
        for stmt in stmts {
            match stmt {
                Stmt::Wire { span, source, dest } => {
                    let source = self.resolve_endpoint(&diagram, source, true)?;
                    let dest = self.resolve_endpoint(&diagram, dest, false)?;
                    let wire = Wire::new(source, dest);
                    wire_spans.insert(wire.clone(), *span);
                    diagram.add_wire(wire.source, wire.dest);
                }
                Stmt::Attach { target, attachment, .. } => {
                    let id = BoxId::from(target.1.as_str());
                    if !diagram.inner.contains_key(&id) {
                        return Err(resolve_err(
                            target.0,
                            format!("attach target `{}` is not a box in this scope", target.1),
                        ));
                    }
                    if children.contains_key(&id) {
                        return Err(resolve_err(
                            target.0,
                            format!("box `{}` has a sub-diagram; attach to its leaves", target.1),
                        ));
                    }
                    let flat_id = match path {
                        Some(p) => p.join(&id),
                        None => id,
                    };
                    if attachments.contains_key(&flat_id) {
                        return Err(resolve_err(
                            target.0,
                            format!("box `{}` has two attachments", target.1),
                        ));
                    }
                    attachments.insert(flat_id, resolve_attachment(attachment)?);
                }
                _ => {}
            }
        }

        // semantic validation, surfaced with the offending statement's span
        let report = diagram.validate();
        if let Some(v) = report.violations.first() {
            let span = v
                .wire()
                .and_then(|w| wire_spans.get(w).copied())
                .or_else(|| match v {
                    crate::diagram::Violation::MultipleFeeds { dest, .. }
                    | crate::diagram::Violation::MissingFeed { dest } => dest
                        .box_id()
                        .and_then(|b| box_spans.get(b).copied()),
                    _ => None,
                })
                .unwrap_or(Span { line: 1, col: 1 });
            return Err(resolve_err(span, format!("invalid diagram: {v}")));
        }

        Ok(DiagramTree { diagram, children })
    }

    fn resolve_endpoint(
        &self,
        diagram: &WiringDiagram,
        e: &Endpoint,
        is_source: bool,
    ) -> Result<PortRef, ParseError> {
        if e.owner == "outer" {
            let (ports, side) = if is_source {
                (&diagram.outer.inputs, "input")
            } else {
                (&diagram.outer.outputs, "output")
            };
            if !ports.iter().any(|p| p.name == e.port) {
                return Err(resolve_err(
                    e.span,
                    format!("outer interface has no {side} port `{}`", e.port),
                ));
            }
            return Ok(if is_source {
                PortRef::outer_input(e.port.clone())
            } else {
                PortRef::outer_output(e.port.clone())
            });
        }
        let id = BoxId::from(e.owner.as_str());
        let iface = diagram
            .inner
            .get(&id)
            .ok_or_else(|| resolve_err(e.span, format!("undeclared box `{}`", e.owner)))?;
        let (ports, side) = if is_source {
            (&iface.outputs, "output")
        } else {
            (&iface.inputs, "input")
        };
        if !ports.iter().any(|p| p.name == e.port) {
            return Err(resolve_err(
                e.span,
                format!("box `{}` has no {side} port `{}`", e.owner, e.port),
            ));
        }
        Ok(if is_source {
            PortRef::box_output(id, e.port.clone())
        } else {
            PortRef::box_input(id, e.port.clone())
        })
    }
}

fn resolve_attachment(ast: &AttachAst) -> Result<Attachment, ParseError> {
    match ast {
        AttachAst::Gate { span, name } => {
            let gate = name.parse::<Gate>().map_err(|e| resolve_err(*span, e.to_string()))?;
            Ok(Attachment::Gate(gate))
        }
        AttachAst::Unit(pairs) => {
            let mut activation = None;
            let mut weights = None;
            let mut bias = None;
            for (span, key, value) in pairs {
                match key.as_str() {
                    "act" => {
                        let DslValue::Ident(vspan, name) = value else {
                            return Err(resolve_err(value.span(), "act: expects an activation name".into()));
                        };
                        activation = Some(
                            name.parse::<Activation>()
                                .map_err(|e| resolve_err(*vspan, e))?,
                        );
                    }
                    "w" => weights = Some(number_list(value)?),
                    "b" => bias = Some(number(value)?),
                    other => {
                        return Err(resolve_err(*span, format!("unknown unit key `{other}`")))
                    }
                }
            }
            Ok(Attachment::Unit {
                activation: activation.unwrap_or(Activation::Identity),
                weights: weights
                    .ok_or_else(|| resolve_err(first_span(pairs), "unit needs `w: [...]`".into()))?,
                bias: bias.unwrap_or(0.0),
            })
        }
        AttachAst::Lti(pairs) => {
            let mut a = None;
            let mut b = None;
            let mut c = None;
            let mut x0 = None;
            for (span, key, value) in pairs {
                match key.as_str() {
                    "a" => a = Some(matrix(value)?),
                    "b" => b = Some(matrix(value)?),
                    "c" => c = Some(matrix(value)?),
                    "x0" => x0 = Some(number_list(value)?),
                    other => {
                        return Err(resolve_err(*span, format!("unknown lti key `{other}`")))
                    }
                }
            }
            let x0 = x0
                .ok_or_else(|| resolve_err(first_span(pairs), "lti needs `x0: [...]`".into()))?;
            Ok(Attachment::Lti {
                a: a.ok_or_else(|| resolve_err(first_span(pairs), "lti needs `a: [[...]]`".into()))?,
                b: b.unwrap_or_else(|| vec![Vec::new(); x0.len()]),
                c: c.ok_or_else(|| resolve_err(first_span(pairs), "lti needs `c: [[...]]`".into()))?,
                x0,
            })
        }
        AttachAst::Delay(pairs) => {
            let mut init = None;
            for (span, key, value) in pairs {
                match key.as_str() {
                    "init" => {
                        init = Some(match value {
                            DslValue::Bool(_, b) => Value::Bool(*b),
                            DslValue::Number(_, x) => Value::Real(*x),
                            other => {
                                return Err(resolve_err(
                                    other.span(),
                                    "init: expects a number or a boolean".into(),
                                ))
                            }
                        })
                    }
                    other => {
                        return Err(resolve_err(*span, format!("unknown delay key `{other}`")))
                    }
                }
            }
            Ok(Attachment::Delay {
                init: init
                    .ok_or_else(|| resolve_err(first_span(pairs), "delay needs `init: ...`".into()))?,
            })
        }
    }
}

fn first_span(pairs: &[(Span, String, DslValue)]) -> Span {
    pairs.first().map(|(s, _, _)| *s).unwrap_or(Span { line: 1, col: 1 })
}

fn number(v: &DslValue) -> Result<f64, ParseError> {
    match v {
        DslValue::Number(_, x) => Ok(*x),
        other => Err(resolve_err(other.span(), "expected a number".into())),
    }
}

fn number_list(v: &DslValue) -> Result<Vec<f64>, ParseError> {
    match v {
        DslValue::List(_, items) => items.iter().map(number).collect(),
        other => Err(resolve_err(other.span(), "expected a list of numbers".into())),
    }
}

fn matrix(v: &DslValue) -> Result<Vec<Vec<f64>>, ParseError> {
    match v {
        DslValue::List(_, rows) => rows.iter().map(number_list).collect(),
        other => Err(resolve_err(other.span(), "expected a matrix".into())),
    }
}

/// Parse a DSL document into a validated tree plus its attachments.
pub fn parse(text: &str) -> Result<Document, ParseError> {
    let tokens = lex(text).map_err(|e| ParseError {
        line: e.span.line,
        col: e.span.col,
        message: e.message,
        expected: Vec::new(),
    })?;
    let mut parser = Parser { tokens, pos: 0 };
    let stmts = parser.parse_document()?;

    let mut resolver = Resolver { interfaces: BTreeMap::new() };
    let mut outer_decl: Option<(Span, String)> = None;
    for stmt in &stmts {
        match stmt {
            Stmt::Interface { span, name, ports } => {
                let mut iface = BoxInterface::default();
                for (_, is_input, pname, kind) in ports {
                    let spec = PortSpec::new(pname.clone(), *kind);
                    if *is_input {
                        iface.inputs.push(spec);
                    } else {
                        iface.outputs.push(spec);
                    }
                }
                if resolver
                    .interfaces
                    .insert(name.clone(), (*span, iface))
                    .is_some()
                {
                    return Err(resolve_err(*span, format!("interface `{name}` declared twice")));
                }
            }
            Stmt::Outer { span, name } => {
                if outer_decl.is_some() {
                    return Err(resolve_err(*span, "`outer` declared twice".into()));
                }
                outer_decl = Some((*span, name.clone()));
            }
            _ => {}
        }
    }

    let outer = match outer_decl {
        Some((span, name)) => resolver
            .interfaces
            .get(&name)
            .ok_or_else(|| resolve_err(span, format!("undeclared interface `{name}`")))?
            .1
            .clone(),
        None => {
            if resolver.interfaces.len() == 1 {
                resolver.interfaces.values().next().expect("one interface").1.clone()
            } else {
                return Err(resolve_err(
                    Span { line: 1, col: 1 },
                    format!(
                        "no `outer` declaration and {} interfaces declared (need exactly 1 to infer)",
                        resolver.interfaces.len()
                    ),
                ));
            }
        }
    };

    let mut attachments = BTreeMap::new();
    let top: Vec<Stmt> = stmts
        .iter()
        .filter(|s| !matches!(s, Stmt::Interface { .. } | Stmt::Outer { .. }))
        .cloned()
        .collect();
    let tree = resolver.build_scope(outer, &top, None, &mut attachments)?;
    Ok(Document { tree, attachments })
}
