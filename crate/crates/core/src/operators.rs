//! Fixed infix operator table shared by the parser and the printers.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assoc {
    Left,
    Right,
    None,
}

/// Precedence of function application; binds tighter than every operator.
pub const APPLICATION: u8 = 10;

/// Precedence and associativity of a binary operator.
pub fn infix(name: &str) -> Option<(u8, Assoc)> {
    Some(match name {
        "?" => (0, Assoc::Right),
        "||" => (2, Assoc::Right),
        "&&" => (3, Assoc::Right),
        "==" | "<" | ">" => (4, Assoc::None),
        "+" | "-" => (6, Assoc::Left),
        "*" | "/" => (7, Assoc::Left),
        "^" => (8, Assoc::Right),
        _ => return None,
    })
}

/// Minimum precedence an operand of `(prec, assoc)` may have without
/// parentheses, on the left and on the right.
pub fn operand_contexts(prec: u8, assoc: Assoc) -> (u8, u8) {
    match assoc {
        Assoc::Left => (prec, prec + 1),
        Assoc::Right => (prec + 1, prec),
        Assoc::None => (prec + 1, prec + 1),
    }
}
