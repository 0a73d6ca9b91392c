pub mod attribute;
pub mod autointerp;
pub mod model;
pub mod probe;
pub mod specialize;
pub mod tokenizer;

/// `--a` overrides the config file value, which overrides the default.
macro_rules! merge {
    ($flags:ident, $file:ident; $($field:ident),+ $(,)?) => {
        $( if $flags.$field.is_some() { $file.$field = $flags.$field.clone(); } )+
    };
}
pub(crate) use merge;
