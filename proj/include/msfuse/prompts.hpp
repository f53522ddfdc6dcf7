#pragma once

#include <string>

namespace msfuse {

// Default prompt texts; all overridable via config.
struct PromptTemplates {
    std::string p_rgb = "In this RGB image, what is in the green box?";
    std::string p_t = "In this thermal image, what is in the green box?";
    std::string p_single =
        "First, predict what is in the RGB image based on the RGB image description. "
        "And predict what is in the thermal image based on the thermal image description. "
        "Please answer in the format : [class, prediction score]";
    std::string p_multi =
        "Based on the descriptions and your answers, predict what is in these aligned "
        "RGB and thermal images. Please answer in the format: [class, prediction score]";
    std::string p_repair =
        "Please answer only in the format: [class, prediction score]";
};

}  // namespace msfuse
