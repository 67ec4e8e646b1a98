//! Recursive-descent parser for the kinetic expression grammar.

use super::{ExprError, Node};

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

pub(crate) fn parse(text: &str) -> Result<Node, ExprError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let node = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(node)
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ExprError {
        ExprError::Syntax {
            position: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Node::add(lhs, self.term()?);
            } else if self.eat(b'-') {
                lhs = Node::sub(lhs, self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Node::mul(lhs, self.unary()?);
            } else if self.eat(b'/') {
                lhs = Node::div(lhs, self.unary()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat(b'-') {
            Ok(Node::neg(self.unary()?))
        } else if self.eat(b'+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if self.eat(b'^') {
            let at = self.pos;
            let exponent = self.unary()?;
            match exponent {
                Node::Const(p) => Ok(Node::pow(base, p)),
                _ => Err(ExprError::Syntax {
                    position: at,
                    message: "exponent must be a constant".into(),
                }),
            }
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            digits(self);
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let exp_start = self.pos;
            digits(self);
            if self.pos == exp_start {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>()
            .map(Node::Const)
            .map_err(|_| ExprError::Syntax {
                position: start,
                message: format!("invalid number `{text}`"),
            })
    }

    fn identifier(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        if name == "V" {
            return Ok(Node::Var);
        }
        let unary: fn(Node) -> Node = match name {
            "exp" => Node::exp,
            "tanh" => Node::tanh,
            "bern" => |a| Node::bern(0, a),
            _ => match name.strip_prefix("bern_d").and_then(|k| k.parse::<u32>().ok()) {
                Some(k) => return self.call(move |a| Node::bern(k, a)),
                None => {
                    return Err(ExprError::UnknownIdentifier {
                        name: name.to_string(),
                        position: start,
                    })
                }
            },
        };
        self.call(unary)
    }

    fn call(&mut self, f: impl Fn(Node) -> Node) -> Result<Node, ExprError> {
        self.expect(b'(')?;
        let arg = self.expr()?;
        self.expect(b')')?;
        Ok(f(arg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let n = parse("1+2*3^2").unwrap();
        assert_eq!(n, Node::Const(19.0));
        let n = parse("-2^2").unwrap();
        assert_eq!(n, Node::Const(-4.0));
        assert_eq!(parse("2^-1").unwrap(), Node::Const(0.5));
        assert_eq!(parse("8/4/2").unwrap(), Node::Const(1.0));
        assert_eq!(parse("1e-3*2").unwrap(), Node::Const(0.002));
    }

    #[test]
    fn syntax_error_offsets() {
        match parse("1/(exp(V)+1") {
            Err(ExprError::Syntax { position, .. }) => assert_eq!(position, 11),
            other => panic!("{other:?}"),
        }
        match parse("2*)") {
            Err(ExprError::Syntax { position, .. }) => assert_eq!(position, 2),
            other => panic!("{other:?}"),
        }
        match parse("V^V") {
            Err(ExprError::Syntax { position, .. }) => assert_eq!(position, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("V V"), Err(ExprError::Syntax { position: 2, .. })));
    }

    #[test]
    fn unknown_identifier() {
        assert_eq!(
            parse("1 + sin(V)"),
            Err(ExprError::UnknownIdentifier {
                name: "sin".into(),
                position: 4
            })
        );
        assert!(matches!(parse("v"), Err(ExprError::UnknownIdentifier { .. })));
    }
}
