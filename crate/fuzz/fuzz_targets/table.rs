#![no_main]

use har_core::driver::{parse_table, ColumnRole, DecimalSeparator, FieldLayout, FileSyntax};
use libfuzzer_sys::fuzz_target;

const DELIMITERS: [char; 5] = [',', ';', '\t', ' ', '|'];
const ROLES: [ColumnRole; 6] = [
    ColumnRole::Timestamp,
    ColumnRole::X,
    ColumnRole::Y,
    ColumnRole::Z,
    ColumnRole::Label,
    ColumnRole::Ignore,
];

// byte 0 picks layout and separator, byte 1 the header rows, bytes 2..8 the
// column roles; the rest is the file text
fuzz_target!(|data: &[u8]| {
    if data.len() < 8 {
        return;
    }
    let Ok(text) = std::str::from_utf8(&data[8..]) else {
        return;
    };
    let mut roles: Vec<ColumnRole> = data[2..8].iter().map(|b| ROLES[*b as usize % ROLES.len()]).collect();
    roles.truncate(3 + (data[1] as usize >> 4) % 4);
    let fields = if data[0] & 0x80 != 0 {
        FieldLayout::FixedWidth {
            widths: data[2..2 + roles.len()].iter().map(|b| 1 + *b as usize % 12).collect(),
        }
    } else {
        FieldLayout::Delimited {
            delimiter: DELIMITERS[data[0] as usize % DELIMITERS.len()],
        }
    };
    let syntax = FileSyntax {
        fields,
        header_rows: (data[1] & 0x3) as usize,
        decimal_separator: if data[0] & 0x40 != 0 { DecimalSeparator::Comma } else { DecimalSeparator::Dot },
        column_roles: roles,
    };
    if let Ok(rows) = parse_table(text, &syntax) {
        for r in rows {
            assert!(r.values.iter().all(|v| v.is_finite()));
        }
    }
});
