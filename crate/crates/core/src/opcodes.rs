//! Static opcode table.
//!
//! Every supported block is described once: its sb3 opcode, category,
//! shape and a text template in scratchblocks notation. Both the printer and
//! the parser are driven by the template, so an entry here is all that is
//! needed to support a new block.
//!
//! Template syntax: literal words separated by spaces, plus slots written as
//! `%<kind>:<NAME>` where `NAME` is the sb3 input or field name and kind is
//! `n` (number input), `s` (text input), `b` (boolean input), `f` (dropdown
//! field), `m` (menu input backed by a shadow block) or `c` (color input).
//! A `?` is always its own word.

use std::collections::HashMap;
use std::sync::LazyLock;

pub const PROCEDURE_DEFINITION: &str = "procedures_definition";
pub const PROCEDURE_CALL: &str = "procedures_call";
pub const PROCEDURE_PROTOTYPE: &str = "procedures_prototype";
pub const ARGUMENT_REPORTER: &str = "argument_reporter_string_number";
pub const ARGUMENT_REPORTER_BOOLEAN: &str = "argument_reporter_boolean";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Motion,
    Looks,
    Sound,
    Events,
    Control,
    Sensing,
    Operators,
    Variables,
    MyBlocks,
    Pen,
}

impl Category {
    pub const ALL: [Category; 10] = [
        Category::Motion,
        Category::Looks,
        Category::Sound,
        Category::Events,
        Category::Control,
        Category::Sensing,
        Category::Operators,
        Category::Variables,
        Category::MyBlocks,
        Category::Pen,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Hat,
    Stack,
    Cap,
    CBlock { branches: u8, cap: bool },
    Reporter,
    Boolean,
}

impl Shape {
    pub fn is_reporter(self) -> bool {
        matches!(self, Shape::Reporter | Shape::Boolean)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Number,
    Text,
    Boolean,
    Field,
    Menu,
    Color,
}

impl SlotKind {
    pub fn is_input(self) -> bool {
        self != SlotKind::Field
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub kind: SlotKind,
    pub name: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Word(&'static str),
    Slot(Slot),
}

/// Shadow block backing a menu input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MenuSpec {
    pub input: &'static str,
    pub opcode: &'static str,
    pub field: &'static str,
}

#[derive(Debug, Clone, Copy)]
pub struct OpSpec {
    pub opcode: &'static str,
    pub category: Category,
    pub shape: Shape,
    pub text: &'static str,
    pub menus: &'static [MenuSpec],
    /// Known values per field/menu; the first one is the default.
    pub choices: &'static [(&'static str, &'static [&'static str])],
    /// Field values outside `choices` do not match this block when parsing.
    pub strict: bool,
}

const fn op(opcode: &'static str, category: Category, shape: Shape, text: &'static str) -> OpSpec {
    OpSpec {
        opcode,
        category,
        shape,
        text,
        menus: &[],
        choices: &[],
        strict: false,
    }
}

impl OpSpec {
    const fn menus(mut self, menus: &'static [MenuSpec]) -> Self {
        self.menus = menus;
        self
    }

    const fn choices(mut self, choices: &'static [(&'static str, &'static [&'static str])]) -> Self {
        self.choices = choices;
        self
    }

    const fn strict(mut self) -> Self {
        self.strict = true;
        self
    }

    /// Custom-block plumbing entries have no text template.
    pub fn is_custom(&self) -> bool {
        self.text.is_empty()
    }

    pub fn branches(&self) -> usize {
        match self.shape {
            Shape::CBlock { branches, .. } => branches as usize,
            _ => 0,
        }
    }

    pub fn is_cap(&self) -> bool {
        matches!(self.shape, Shape::Cap | Shape::CBlock { cap: true, .. })
    }

    pub fn parts(&self) -> &'static [Part] {
        PARTS.get(self.opcode).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn slots(&self) -> Vec<Slot> {
        self.parts()
            .iter()
            .filter_map(|p| match p {
                Part::Slot(s) => Some(*s),
                Part::Word(_) => None,
            })
            .collect()
    }

    pub fn menu(&self, input: &str) -> Option<&'static MenuSpec> {
        self.menus.iter().find(|m| m.input == input)
    }

    pub fn choices_for(&self, name: &str) -> Option<&'static [&'static str]> {
        self.choices.iter().find(|(n, _)| *n == name).map(|(_, c)| *c)
    }
}

fn compile(text: &'static str) -> Vec<Part> {
    text.split_whitespace()
        .map(|w| match w.strip_prefix('%').filter(|r| !r.is_empty()) {
            Some(rest) => {
                let (kind, name) = rest.split_once(':').expect("slot needs a name");
                let kind = match kind {
                    "n" => SlotKind::Number,
                    "s" => SlotKind::Text,
                    "b" => SlotKind::Boolean,
                    "f" => SlotKind::Field,
                    "m" => SlotKind::Menu,
                    "c" => SlotKind::Color,
                    other => panic!("unknown slot kind {other}"),
                };
                Part::Slot(Slot { kind, name })
            }
            None => Part::Word(w),
        })
        .collect()
}

static PARTS: LazyLock<HashMap<&'static str, Vec<Part>>> =
    LazyLock::new(|| OPCODES.iter().map(|s| (s.opcode, compile(s.text))).collect());

static INDEX: LazyLock<HashMap<&'static str, &'static OpSpec>> =
    LazyLock::new(|| OPCODES.iter().map(|s| (s.opcode, s)).collect());

pub fn lookup(opcode: &str) -> Option<&'static OpSpec> {
    INDEX.get(opcode).copied()
}

/// Shadow opcodes that back menu inputs, mapped to their field name.
pub fn menu_shadow_field(opcode: &str) -> Option<&'static str> {
    OPCODES
        .iter()
        .flat_map(|s| s.menus.iter())
        .find(|m| m.opcode == opcode)
        .map(|m| m.field)
}

/// Internal menu values that scratchblocks shows under a friendlier name.
const MENU_NAMES: &[(&str, &str)] = &[
    ("_random_", "random position"),
    ("_mouse_", "mouse-pointer"),
    ("_edge_", "edge"),
    ("_myself_", "myself"),
    ("_stage_", "Stage"),
];

pub fn menu_display(value: &str) -> &str {
    MENU_NAMES
        .iter()
        .find(|(v, _)| *v == value)
        .map(|(_, d)| *d)
        .unwrap_or(value)
}

pub fn menu_value(display: &str) -> &str {
    MENU_NAMES
        .iter()
        .find(|(_, d)| d.eq_ignore_ascii_case(display))
        .map(|(v, _)| *v)
        .unwrap_or(display)
}

use Category::*;
use Shape::*;

const C1: Shape = CBlock { branches: 1, cap: false };
const C2: Shape = CBlock { branches: 2, cap: false };
const FOREVER: Shape = CBlock { branches: 1, cap: true };

const fn m(input: &'static str, opcode: &'static str, field: &'static str) -> MenuSpec {
    MenuSpec { input, opcode, field }
}

const TARGETS: &[&str] = &["_random_", "_mouse_"];
const POINTS: &[&str] = &["_mouse_"];
const KEYS: &[&str] = &["space", "up arrow", "down arrow", "left arrow", "right arrow", "any", "a"];
const EFFECTS: &[&str] = &["color", "fisheye", "whirl", "pixelate", "mosaic", "brightness", "ghost"];

pub static OPCODES: &[OpSpec] = &[
    // motion
    op("motion_movesteps", Motion, Stack, "move %n:STEPS steps"),
    op("motion_turnright", Motion, Stack, "turn right %n:DEGREES degrees"),
    op("motion_turnleft", Motion, Stack, "turn left %n:DEGREES degrees"),
    op("motion_goto", Motion, Stack, "go to %m:TO")
        .menus(&[m("TO", "motion_goto_menu", "TO")])
        .choices(&[("TO", TARGETS)]),
    op("motion_gotoxy", Motion, Stack, "go to x: %n:X y: %n:Y"),
    op("motion_glideto", Motion, Stack, "glide %n:SECS secs to %m:TO")
        .menus(&[m("TO", "motion_glideto_menu", "TO")])
        .choices(&[("TO", TARGETS)]),
    op("motion_glidesecstoxy", Motion, Stack, "glide %n:SECS secs to x: %n:X y: %n:Y"),
    op("motion_pointindirection", Motion, Stack, "point in direction %n:DIRECTION"),
    op("motion_pointtowards", Motion, Stack, "point towards %m:TOWARDS")
        .menus(&[m("TOWARDS", "motion_pointtowards_menu", "TOWARDS")])
        .choices(&[("TOWARDS", POINTS)]),
    op("motion_changexby", Motion, Stack, "change x by %n:DX"),
    op("motion_setx", Motion, Stack, "set x to %n:X"),
    op("motion_changeyby", Motion, Stack, "change y by %n:DY"),
    op("motion_sety", Motion, Stack, "set y to %n:Y"),
    op("motion_ifonedgebounce", Motion, Stack, "if on edge, bounce"),
    op("motion_setrotationstyle", Motion, Stack, "set rotation style %f:STYLE")
        .choices(&[("STYLE", &["left-right", "don't rotate", "all around"])]),
    op("motion_xposition", Motion, Reporter, "x position"),
    op("motion_yposition", Motion, Reporter, "y position"),
    op("motion_direction", Motion, Reporter, "direction"),
    // looks
    op("looks_sayforsecs", Looks, Stack, "say %s:MESSAGE for %n:SECS seconds"),
    op("looks_say", Looks, Stack, "say %s:MESSAGE"),
    op("looks_thinkforsecs", Looks, Stack, "think %s:MESSAGE for %n:SECS seconds"),
    op("looks_think", Looks, Stack, "think %s:MESSAGE"),
    op("looks_switchcostumeto", Looks, Stack, "switch costume to %m:COSTUME")
        .menus(&[m("COSTUME", "looks_costume", "COSTUME")])
        .choices(&[("COSTUME", &["costume1", "costume2"])]),
    op("looks_nextcostume", Looks, Stack, "next costume"),
    op("looks_switchbackdropto", Looks, Stack, "switch backdrop to %m:BACKDROP")
        .menus(&[m("BACKDROP", "looks_backdrops", "BACKDROP")])
        .choices(&[("BACKDROP", &["backdrop1", "next backdrop"])]),
    op("looks_nextbackdrop", Looks, Stack, "next backdrop"),
    op("looks_changesizeby", Looks, Stack, "change size by %n:CHANGE"),
    op("looks_setsizeto", Looks, Stack, "set size to %n:SIZE %"),
    op("looks_changeeffectby", Looks, Stack, "change %f:EFFECT effect by %n:CHANGE").choices(&[("EFFECT", EFFECTS)]),
    op("looks_seteffectto", Looks, Stack, "set %f:EFFECT effect to %n:VALUE").choices(&[("EFFECT", EFFECTS)]),
    op("looks_cleargraphiceffects", Looks, Stack, "clear graphic effects"),
    op("looks_show", Looks, Stack, "show"),
    op("looks_hide", Looks, Stack, "hide"),
    op("looks_gotofrontback", Looks, Stack, "go to %f:FRONT_BACK layer").choices(&[("FRONT_BACK", &["front", "back"])]),
    op("looks_goforwardbackwardlayers", Looks, Stack, "go %f:FORWARD_BACKWARD %n:NUM layers")
        .choices(&[("FORWARD_BACKWARD", &["forward", "backward"])]),
    op("looks_costumenumbername", Looks, Reporter, "costume %f:NUMBER_NAME")
        .choices(&[("NUMBER_NAME", &["number", "name"])]),
    op("looks_backdropnumbername", Looks, Reporter, "backdrop %f:NUMBER_NAME")
        .choices(&[("NUMBER_NAME", &["number", "name"])]),
    op("looks_size", Looks, Reporter, "size"),
    // sound
    op("sound_playuntildone", Sound, Stack, "play sound %m:SOUND_MENU until done")
        .menus(&[m("SOUND_MENU", "sound_sounds_menu", "SOUND_MENU")])
        .choices(&[("SOUND_MENU", &["Meow", "pop"])]),
    op("sound_play", Sound, Stack, "start sound %m:SOUND_MENU")
        .menus(&[m("SOUND_MENU", "sound_sounds_menu", "SOUND_MENU")])
        .choices(&[("SOUND_MENU", &["Meow", "pop"])]),
    op("sound_stopallsounds", Sound, Stack, "stop all sounds"),
    op("sound_cleareffects", Sound, Stack, "clear sound effects"),
    op("sound_changevolumeby", Sound, Stack, "change volume by %n:VOLUME"),
    op("sound_setvolumeto", Sound, Stack, "set volume to %n:VOLUME %"),
    op("sound_volume", Sound, Reporter, "volume"),
    // events
    op("event_whenflagclicked", Events, Hat, "when green flag clicked"),
    op("event_whenthisspriteclicked", Events, Hat, "when this sprite clicked"),
    op("event_whenstageclicked", Events, Hat, "when stage clicked"),
    op("event_whenkeypressed", Events, Hat, "when %f:KEY_OPTION key pressed").choices(&[("KEY_OPTION", KEYS)]),
    op("event_whenbroadcastreceived", Events, Hat, "when I receive %f:BROADCAST_OPTION")
        .choices(&[("BROADCAST_OPTION", &["message1"])]),
    op("event_whenbackdropswitchesto", Events, Hat, "when backdrop switches to %f:BACKDROP")
        .choices(&[("BACKDROP", &["backdrop1"])]),
    op("event_whengreaterthan", Events, Hat, "when %f:WHENGREATERTHANMENU > %n:VALUE")
        .choices(&[("WHENGREATERTHANMENU", &["LOUDNESS", "TIMER"])]),
    op("event_broadcast", Events, Stack, "broadcast %m:BROADCAST_INPUT")
        .menus(&[m("BROADCAST_INPUT", "event_broadcast_menu", "BROADCAST_OPTION")])
        .choices(&[("BROADCAST_INPUT", &["message1"])]),
    op("event_broadcastandwait", Events, Stack, "broadcast %m:BROADCAST_INPUT and wait")
        .menus(&[m("BROADCAST_INPUT", "event_broadcast_menu", "BROADCAST_OPTION")])
        .choices(&[("BROADCAST_INPUT", &["message1"])]),
    // control
    op("control_wait", Control, Stack, "wait %n:DURATION seconds"),
    op("control_repeat", Control, C1, "repeat %n:TIMES"),
    op("control_forever", Control, FOREVER, "forever"),
    op("control_if", Control, C1, "if %b:CONDITION then"),
    op("control_if_else", Control, C2, "if %b:CONDITION then"),
    op("control_wait_until", Control, Stack, "wait until %b:CONDITION"),
    op("control_repeat_until", Control, C1, "repeat until %b:CONDITION"),
    op("control_stop", Control, Stack, "stop %f:STOP_OPTION")
        .choices(&[("STOP_OPTION", &["all", "this script", "other scripts in sprite"])]),
    op("control_start_as_clone", Control, Hat, "when I start as a clone"),
    op("control_create_clone_of", Control, Stack, "create clone of %m:CLONE_OPTION")
        .menus(&[m("CLONE_OPTION", "control_create_clone_of_menu", "CLONE_OPTION")])
        .choices(&[("CLONE_OPTION", &["_myself_"])]),
    op("control_delete_this_clone", Control, Cap, "delete this clone"),
    // sensing
    op("sensing_touchingobject", Sensing, Boolean, "touching %m:TOUCHINGOBJECTMENU ?")
        .menus(&[m("TOUCHINGOBJECTMENU", "sensing_touchingobjectmenu", "TOUCHINGOBJECTMENU")])
        .choices(&[("TOUCHINGOBJECTMENU", &["_mouse_", "_edge_"])]),
    op("sensing_touchingcolor", Sensing, Boolean, "touching color %c:COLOR ?"),
    op("sensing_coloristouchingcolor", Sensing, Boolean, "color %c:COLOR is touching %c:COLOR2 ?"),
    op("sensing_distanceto", Sensing, Reporter, "distance to %m:DISTANCETOMENU")
        .menus(&[m("DISTANCETOMENU", "sensing_distancetomenu", "DISTANCETOMENU")])
        .choices(&[("DISTANCETOMENU", POINTS)]),
    op("sensing_askandwait", Sensing, Stack, "ask %s:QUESTION and wait"),
    op("sensing_answer", Sensing, Reporter, "answer"),
    op("sensing_keypressed", Sensing, Boolean, "key %m:KEY_OPTION pressed ?")
        .menus(&[m("KEY_OPTION", "sensing_keyoptions", "KEY_OPTION")])
        .choices(&[("KEY_OPTION", KEYS)]),
    op("sensing_mousedown", Sensing, Boolean, "mouse down ?"),
    op("sensing_mousex", Sensing, Reporter, "mouse x"),
    op("sensing_mousey", Sensing, Reporter, "mouse y"),
    op("sensing_setdragmode", Sensing, Stack, "set drag mode %f:DRAG_MODE")
        .choices(&[("DRAG_MODE", &["draggable", "not draggable"])]),
    op("sensing_loudness", Sensing, Reporter, "loudness"),
    op("sensing_timer", Sensing, Reporter, "timer"),
    op("sensing_resettimer", Sensing, Stack, "reset timer"),
    // listed ahead of sensing_of, which shares its shape
    op("operator_mathop", Operators, Reporter, "%f:OPERATOR of %n:NUM")
        .choices(&[(
            "OPERATOR",
            &["abs", "floor", "ceiling", "sqrt", "sin", "cos", "tan", "asin", "acos", "atan", "ln", "log", "e ^", "10 ^"],
        )])
        .strict(),
    op("sensing_of", Sensing, Reporter, "%f:PROPERTY of %m:OBJECT")
        .menus(&[m("OBJECT", "sensing_of_object_menu", "OBJECT")])
        .choices(&[
            ("PROPERTY", &["x position", "y position", "direction", "costume #", "costume name", "size", "volume"]),
            ("OBJECT", &["_stage_"]),
        ]),
    op("sensing_current", Sensing, Reporter, "current %f:CURRENTMENU")
        .choices(&[("CURRENTMENU", &["YEAR", "MONTH", "DATE", "DAYOFWEEK", "HOUR", "MINUTE", "SECOND"])]),
    op("sensing_dayssince2000", Sensing, Reporter, "days since 2000"),
    op("sensing_username", Sensing, Reporter, "username"),
    // operators
    op("operator_add", Operators, Reporter, "%n:NUM1 + %n:NUM2"),
    op("operator_subtract", Operators, Reporter, "%n:NUM1 - %n:NUM2"),
    op("operator_multiply", Operators, Reporter, "%n:NUM1 * %n:NUM2"),
    op("operator_divide", Operators, Reporter, "%n:NUM1 / %n:NUM2"),
    op("operator_random", Operators, Reporter, "pick random %n:FROM to %n:TO"),
    op("operator_gt", Operators, Boolean, "%s:OPERAND1 > %s:OPERAND2"),
    op("operator_lt", Operators, Boolean, "%s:OPERAND1 < %s:OPERAND2"),
    op("operator_equals", Operators, Boolean, "%s:OPERAND1 = %s:OPERAND2"),
    op("operator_and", Operators, Boolean, "%b:OPERAND1 and %b:OPERAND2"),
    op("operator_or", Operators, Boolean, "%b:OPERAND1 or %b:OPERAND2"),
    op("operator_not", Operators, Boolean, "not %b:OPERAND"),
    op("operator_join", Operators, Reporter, "join %s:STRING1 %s:STRING2"),
    op("operator_letter_of", Operators, Reporter, "letter %n:LETTER of %s:STRING"),
    op("operator_mod", Operators, Reporter, "%n:NUM1 mod %n:NUM2"),
    op("operator_round", Operators, Reporter, "round %n:NUM"),
    // variables; list forms precede the operator forms they shadow
    op("data_setvariableto", Variables, Stack, "set %f:VARIABLE to %s:VALUE"),
    op("data_changevariableby", Variables, Stack, "change %f:VARIABLE by %n:VALUE"),
    op("data_showvariable", Variables, Stack, "show variable %f:VARIABLE"),
    op("data_hidevariable", Variables, Stack, "hide variable %f:VARIABLE"),
    op("data_addtolist", Variables, Stack, "add %s:ITEM to %f:LIST"),
    op("data_deleteoflist", Variables, Stack, "delete %n:INDEX of %f:LIST"),
    op("data_deletealloflist", Variables, Stack, "delete all of %f:LIST"),
    op("data_insertatlist", Variables, Stack, "insert %s:ITEM at %n:INDEX of %f:LIST"),
    op("data_replaceitemoflist", Variables, Stack, "replace item %n:INDEX of %f:LIST with %s:ITEM"),
    op("data_itemoflist", Variables, Reporter, "item %n:INDEX of %f:LIST"),
    op("data_itemnumoflist", Variables, Reporter, "item # of %s:ITEM in %f:LIST"),
    op("data_lengthoflist", Variables, Reporter, "length of %f:LIST"),
    op("data_listcontainsitem", Variables, Boolean, "%f:LIST contains %s:ITEM ?"),
    op("data_showlist", Variables, Stack, "show list %f:LIST"),
    op("data_hidelist", Variables, Stack, "hide list %f:LIST"),
    op("operator_length", Operators, Reporter, "length of %s:STRING"),
    op("operator_contains", Operators, Boolean, "%s:STRING1 contains %s:STRING2 ?"),
    // pen
    op("pen_clear", Pen, Stack, "erase all"),
    op("pen_stamp", Pen, Stack, "stamp"),
    op("pen_penDown", Pen, Stack, "pen down"),
    op("pen_penUp", Pen, Stack, "pen up"),
    op("pen_setPenColorToColor", Pen, Stack, "set pen color to %c:COLOR"),
    op("pen_changePenColorParamBy", Pen, Stack, "change pen %m:COLOR_PARAM by %n:VALUE")
        .menus(&[m("COLOR_PARAM", "pen_menu_colorParam", "colorParam")])
        .choices(&[("COLOR_PARAM", &["color", "saturation", "brightness", "transparency"])]),
    op("pen_setPenColorParamTo", Pen, Stack, "set pen %m:COLOR_PARAM to %n:VALUE")
        .menus(&[m("COLOR_PARAM", "pen_menu_colorParam", "colorParam")])
        .choices(&[("COLOR_PARAM", &["color", "saturation", "brightness", "transparency"])]),
    op("pen_changePenSizeBy", Pen, Stack, "change pen size by %n:SIZE"),
    op("pen_setPenSizeTo", Pen, Stack, "set pen size to %n:SIZE"),
    // my blocks: handled by the prototype machinery, not by templates
    op(PROCEDURE_DEFINITION, MyBlocks, Hat, ""),
    op(PROCEDURE_CALL, MyBlocks, Stack, ""),
];
