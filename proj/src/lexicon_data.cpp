#include <array>
#include <string_view>
#include <utility>

#include "cocole/concept_cache.hpp"

namespace cocole {

namespace {

struct Group {
    std::string_view category;
    std::string_view words;
};

// 200 descriptive concept words grouped by visual category.
constexpr std::array<Group, 8> kGroups = {{
    {"texture",
     "smooth rough grainy fuzzy furry silky bumpy coarse glossy matte velvety scaly feathery woolly slimy "
     "sticky spiky prickly crinkled wrinkled leathery porous rubbery polished gritty fluffy knitted woven "
     "cracked crumpled"},
    {"color",
     "red orange yellow green blue purple pink brown black white gray golden silver beige turquoise crimson "
     "maroon navy olive teal violet amber ivory scarlet magenta cyan lavender tan bronze copper emerald "
     "indigo khaki coral charcoal"},
    {"transparency",
     "transparent translucent opaque clear cloudy frosted hazy murky glassy milky sheer foggy crystalline "
     "tinted misty"},
    {"brightness",
     "bright dark dim shiny glowing radiant sunny shadowy pale vivid dull luminous gleaming glittering "
     "sparkling faded muted brilliant dusky shimmering"},
    {"motion",
     "moving still running flying swimming jumping rolling spinning floating falling crawling sliding "
     "drifting racing walking galloping diving climbing swaying fluttering bouncing leaping hovering "
     "stationary rushing"},
    {"emotion",
     "happy sad angry calm playful scared curious sleepy excited relaxed fierce gentle friendly lonely proud "
     "shy alert bored cheerful grumpy anxious peaceful lively tired content"},
    {"pattern",
     "striped spotted checkered dotted plaid floral zigzag wavy swirled speckled mottled marbled banded "
     "ringed patched dappled tiled geometric honeycomb herringbone paisley camouflage freckled streaked grid "
     "layered ribbed quilted embossed mosaic"},
    {"shape",
     "round square oval curved pointed angular flat tall long short narrow wide thin thick hollow tapered "
     "jagged spherical cylindrical triangular"},
}};

}  // namespace

ConceptLexicon default_lexicon() {
    ConceptLexicon lex;
    for (const auto& g : kGroups) {
        std::string_view rest = g.words;
        while (!rest.empty()) {
            const auto sp = rest.find(' ');
            const auto word = rest.substr(0, sp);
            lex.entries.push_back({std::string(word), std::string(g.category)});
            rest = sp == std::string_view::npos ? std::string_view{} : rest.substr(sp + 1);
        }
    }
    return lex;
}

}  // namespace cocole
