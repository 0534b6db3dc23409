/* Copyright 2026 The dsir Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef DSIR_IO_HPP
#define DSIR_IO_HPP

#include <string>
#include <vector>

#include "dsir/contrastive.hpp"
#include "dsir/metrics.hpp"
#include "dsir/registration.hpp"
#include "dsir/volume.hpp"

namespace dsir {

enum class ValueKind { intensity, label, displacement, dsir };

std::string value_kind_name(ValueKind k);
ValueKind value_kind_from_string(const std::string& name);

// In-memory image of one container file: little-endian float32 payload
// (channels-last for multi-channel data) plus a JSON sidecar holding
// dims, channels, spacing and the value kind. NIfTI-1 single-file
// volumes (uint8 / int16 / float32, magic "n+1") are read and written
// for single-channel data.
struct Container {
  Dims dims;
  Spacing spacing;
  int channels = 1;
  ValueKind kind = ValueKind::intensity;
  std::vector<real> data;  // channels-last: data[voxel * channels + c]
};

// Format chosen by extension: ".vol" native (sidecar "<path>.json"),
// ".nii" NIfTI-1.
void write_container(const Container& c, const std::string& path);
Container read_container(const std::string& path);

Container to_container(const Volume& v, ValueKind kind = ValueKind::intensity);
Container to_container(const DisplacementField& f);
Container to_container(const Field& f, ValueKind kind = ValueKind::dsir);
Container to_container(const LabelVolume& l);

Volume volume_from(const Container& c);
DisplacementField displacement_from(const Container& c);
Field field_from(const Container& c);
LabelVolume labels_from(const Container& c);

// Convenience single-volume round trip.
void write_volume(const Volume& v, const std::string& path,
                  ValueKind kind = ValueKind::intensity);
Volume read_volume(const std::string& path);

// Config files are JSON with keys mirroring the config structs.
RegistrationConfig load_registration_config(const std::string& path);
TrainConfig load_train_config(const std::string& path);

}  // namespace dsir

#endif  // DSIR_IO_HPP
